//! File formats, observation preprocessing and synthetic scenarios.

mod cases;
mod io;
mod scenario;
mod series;

pub use cases::CaseDeathSeries;
pub use io::{
    load_inputs, read_cases, read_contacts, read_devices, read_pois, read_tracts, write_cases,
    write_contacts, write_devices, write_pois, write_scenario, write_tracts, InputPaths, Inputs,
    Repair,
};
pub use scenario::{
    generate_scenario, NoiseMode, PoiGroup, Profile, ScenarioConfig, SyntheticScenario, Tract,
};
pub use series::{apply_lag, rolling_average};
