use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CaseDeathSeries, SyntheticScenario, Tract};
use crate::error::{Error, Result};
use crate::mobility::{MobilityData, PoiRecord, PoiWeek, HOURS_PER_WEEK};
use crate::model::{Compartment, ContactMatrixSeries, EpidemicParams};

const DATE_FORMAT: &str = "%Y-%m-%d";

/// A CSV file opened with its required columns located.
struct Sheet {
    path: PathBuf,
    reader: csv::Reader<File>,
    columns: Vec<(String, usize)>,
}

impl Sheet {
    fn open(path: &Path, required: &[&str], optional: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                source: e,
            })?
            .clone();
        let mut columns = Vec::new();
        for name in required.iter().chain(optional) {
            match headers.iter().position(|h| h == *name) {
                Some(i) => columns.push((name.to_string(), i)),
                None if required.contains(name) => {
                    return Err(Error::Schema {
                        file: path.to_path_buf(),
                        line: 1,
                        column: name.to_string(),
                        message: "missing column".into(),
                    })
                }
                None => {}
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            reader,
            columns,
        })
    }

    fn rows(&mut self) -> Result<Vec<Row>> {
        let mut out = Vec::new();
        for rec in self.reader.records() {
            let rec = rec.map_err(|e| Error::Csv {
                path: self.path.clone(),
                source: e,
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let mut fields = HashMap::new();
            for (name, i) in &self.columns {
                if let Some(v) = rec.get(*i) {
                    fields.insert(name.clone(), v.to_string());
                }
            }
            out.push(Row {
                path: self.path.clone(),
                line,
                fields,
            });
        }
        Ok(out)
    }
}

struct Row {
    path: PathBuf,
    line: u64,
    fields: HashMap<String, String>,
}

impl Row {
    fn error(&self, column: &str, message: impl Into<String>) -> Error {
        Error::Schema {
            file: self.path.clone(),
            line: self.line,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn has(&self, column: &str) -> bool {
        self.fields.contains_key(column)
    }

    fn text(&self, column: &str) -> Result<&str> {
        match self.fields.get(column) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(self.error(column, "missing value")),
        }
    }

    fn parse<T: FromStr>(&self, column: &str, what: &str) -> Result<T> {
        let raw = self.text(column)?;
        raw.parse()
            .map_err(|_| self.error(column, format!("expected {what}, got `{raw}`")))
    }

    fn count(&self, column: &str) -> Result<u64> {
        self.parse(column, "a nonnegative integer")
    }

    fn real(&self, column: &str) -> Result<f64> {
        let v: f64 = self.parse(column, "a number")?;
        if !v.is_finite() {
            return Err(self.error(column, "value is not finite"));
        }
        Ok(v)
    }

    fn nonnegative(&self, column: &str) -> Result<f64> {
        let v = self.real(column)?;
        if v < 0.0 {
            return Err(self.error(column, format!("negative value {v}")));
        }
        Ok(v)
    }

    fn positive(&self, column: &str) -> Result<f64> {
        let v = self.real(column)?;
        if v <= 0.0 {
            return Err(self.error(column, format!("value must be positive, got {v}")));
        }
        Ok(v)
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn put<I, S>(w: &mut csv::Writer<File>, path: &Path, record: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(record).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_tracts(path: &Path, tracts: &[Tract]) -> Result<()> {
    let mut w = writer(path)?;
    put(&mut w, path, ["tract_id", "population", "lat", "lon"])?;
    for t in tracts {
        put(
            &mut w,
            path,
            [t.id.clone(), t.population.to_string(), t.lat.to_string(), t.lon.to_string()],
        )?;
    }
    finish(w, path)
}

/// Reads `tract_id,population` with optional `lat,lon`.
pub fn read_tracts(path: &Path) -> Result<Vec<Tract>> {
    let mut sheet = Sheet::open(path, &["tract_id", "population"], &["lat", "lon"])?;
    let mut seen = HashMap::new();
    let mut tracts = Vec::new();
    for row in sheet.rows()? {
        let id = row.text("tract_id")?.to_string();
        if seen.insert(id.clone(), ()).is_some() {
            return Err(row.error("tract_id", format!("duplicate tract `{id}`")));
        }
        let coord = |c: &str| if row.has(c) { row.real(c) } else { Ok(0.0) };
        tracts.push(Tract {
            population: row.positive("population")?,
            lat: coord("lat")?,
            lon: coord("lon")?,
            id,
        });
    }
    if tracts.is_empty() {
        return Err(Error::Structural(format!("{} lists no tracts", path.display())));
    }
    Ok(tracts)
}

fn tract_index(tracts: &[Tract]) -> HashMap<&str, usize> {
    tracts.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect()
}

pub fn write_devices(path: &Path, tracts: &[Tract], devices: &[Vec<f64>]) -> Result<()> {
    let mut w = writer(path)?;
    put(&mut w, path, ["tract_id", "week", "device_count"])?;
    for (week, row) in devices.iter().enumerate() {
        for (t, d) in tracts.iter().zip(row) {
            put(&mut w, path, [t.id.clone(), week.to_string(), d.to_string()])?;
        }
    }
    finish(w, path)
}

/// Device counts per week and tract; weeks must run `0..W` with every tract
/// present in each.
pub fn read_devices(path: &Path, tracts: &[Tract]) -> Result<Vec<Vec<f64>>> {
    let index = tract_index(tracts);
    let mut sheet = Sheet::open(path, &["tract_id", "week", "device_count"], &[])?;
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    let mut weeks = 0;
    for row in sheet.rows()? {
        let id = row.text("tract_id")?;
        let tract = *index
            .get(id)
            .ok_or_else(|| row.error("tract_id", format!("unknown tract `{id}`")))?;
        let week: usize = row.parse("week", "a week index")?;
        let count = row.nonnegative("device_count")?;
        if cells.insert((week, tract), count).is_some() {
            return Err(row.error("week", format!("duplicate entry for tract `{id}` week {week}")));
        }
        weeks = weeks.max(week + 1);
    }
    (0..weeks)
        .map(|w| {
            (0..tracts.len())
                .map(|i| {
                    cells.get(&(w, i)).copied().ok_or_else(|| {
                        Error::Structural(format!(
                            "{}: no device count for tract `{}` in week {w}",
                            path.display(),
                            tracts[i].id
                        ))
                    })
                })
                .collect()
        })
        .collect()
}

pub fn write_cases(path: &Path, reports: &CaseDeathSeries) -> Result<()> {
    let mut w = writer(path)?;
    put(&mut w, path, ["date", "cases", "deaths"])?;
    for t in 0..reports.len() {
        put(
            &mut w,
            path,
            [
                reports.date(t).format(DATE_FORMAT).to_string(),
                reports.cases()[t].to_string(),
                reports.deaths()[t].to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// Reads `date,cases,deaths` with contiguous ISO dates.
pub fn read_cases(path: &Path) -> Result<CaseDeathSeries> {
    let mut sheet = Sheet::open(path, &["date", "cases", "deaths"], &[])?;
    let mut start = None;
    let (mut cases, mut deaths) = (Vec::new(), Vec::new());
    for row in sheet.rows()? {
        let raw = row.text("date")?;
        let date = NaiveDate::parse_from_str(raw, DATE_FORMAT)
            .map_err(|_| row.error("date", format!("expected an ISO date, got `{raw}`")))?;
        let first = *start.get_or_insert(date);
        if (date - first).num_days() != cases.len() as i64 {
            return Err(row.error("date", format!("date {date} breaks the daily sequence")));
        }
        cases.push(row.count("cases")?);
        deaths.push(row.count("deaths")?);
    }
    let start = start.ok_or_else(|| Error::Structural(format!("{} has no rows", path.display())))?;
    CaseDeathSeries::new(start, cases, deaths)
}

/// Writes visit records to `pois.csv`, `visits_hourly.csv` and
/// `origins_weekly.csv`. Zero counts are omitted.
pub fn write_pois(pois_path: &Path, visits_path: &Path, origins_path: &Path, pois: &[PoiRecord], tracts: &[Tract]) -> Result<()> {
    let mut w = writer(pois_path)?;
    put(&mut w, pois_path, ["poi_id", "area_sqft", "median_dwell_hours", "lat", "lon", "home_tract"])?;
    for p in pois {
        put(
            &mut w,
            pois_path,
            [
                p.poi_id.clone(),
                p.area.to_string(),
                p.dwell.to_string(),
                p.lat.to_string(),
                p.lon.to_string(),
                tracts[p.home_tract].id.clone(),
            ],
        )?;
    }
    finish(w, pois_path)?;

    let mut w = writer(visits_path)?;
    put(&mut w, visits_path, ["poi_id", "week", "hour_of_week", "count"])?;
    for p in pois {
        for (week, wk) in p.weeks.iter().enumerate() {
            for (hour, c) in wk.visits.iter().enumerate() {
                if *c > 0 {
                    put(&mut w, visits_path, [p.poi_id.clone(), week.to_string(), hour.to_string(), c.to_string()])?;
                }
            }
        }
    }
    finish(w, visits_path)?;

    let mut w = writer(origins_path)?;
    put(&mut w, origins_path, ["poi_id", "week", "tract_id", "count"])?;
    for p in pois {
        for (week, wk) in p.weeks.iter().enumerate() {
            for (t, c) in &wk.origins {
                if *c > 0.0 {
                    put(&mut w, origins_path, [p.poi_id.clone(), week.to_string(), tracts[*t].id.clone(), c.to_string()])?;
                }
            }
        }
    }
    finish(w, origins_path)
}

/// A week whose origin counts were rescaled to match its visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repair {
    pub poi_id: String,
    pub week: usize,
    pub visits: f64,
    pub origins_before: f64,
}

/// Reads POI records over `n_weeks` weeks and repairs weeks whose origin
/// total disagrees with the hourly visits.
pub fn read_pois(
    pois_path: &Path,
    visits_path: &Path,
    origins_path: &Path,
    tracts: &[Tract],
    n_weeks: usize,
) -> Result<(Vec<PoiRecord>, Vec<Repair>)> {
    let index = tract_index(tracts);
    let mut sheet = Sheet::open(
        pois_path,
        &["poi_id", "area_sqft", "median_dwell_hours", "lat", "lon", "home_tract"],
        &[],
    )?;
    let mut pois: Vec<PoiRecord> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for row in sheet.rows()? {
        let id = row.text("poi_id")?.to_string();
        if by_id.insert(id.clone(), pois.len()).is_some() {
            return Err(row.error("poi_id", format!("duplicate POI `{id}`")));
        }
        let home = row.text("home_tract")?;
        let home_tract = *index
            .get(home)
            .ok_or_else(|| row.error("home_tract", format!("unknown tract `{home}`")))?;
        let lat = row.real("lat")?;
        if lat.abs() > 90.0 {
            return Err(row.error("lat", format!("latitude {lat} out of range")));
        }
        pois.push(PoiRecord {
            poi_id: id,
            area: row.positive("area_sqft")?,
            dwell: row.positive("median_dwell_hours")?,
            lat,
            lon: row.real("lon")?,
            home_tract,
            weeks: vec![PoiWeek::empty(HOURS_PER_WEEK); n_weeks],
        });
    }

    let locate = |row: &Row, by_id: &HashMap<String, usize>| -> Result<(usize, usize)> {
        let id = row.text("poi_id")?;
        let p = *by_id
            .get(id)
            .ok_or_else(|| row.error("poi_id", format!("unknown POI `{id}`")))?;
        let week: usize = row.parse("week", "a week index")?;
        if week >= n_weeks {
            return Err(row.error("week", format!("week {week} outside the {n_weeks} weeks of device data")));
        }
        Ok((p, week))
    };

    let mut sheet = Sheet::open(visits_path, &["poi_id", "week", "hour_of_week", "count"], &[])?;
    let mut seen = HashMap::new();
    for row in sheet.rows()? {
        let (p, week) = locate(&row, &by_id)?;
        let hour: usize = row.parse("hour_of_week", "an hour index")?;
        if hour >= HOURS_PER_WEEK {
            return Err(row.error("hour_of_week", format!("hour {hour} outside 0..{HOURS_PER_WEEK}")));
        }
        let count = row.count("count")?;
        if seen.insert((p, week, hour), ()).is_some() {
            return Err(row.error("hour_of_week", "duplicate row"));
        }
        pois[p].weeks[week].visits[hour] = count;
    }

    let mut sheet = Sheet::open(origins_path, &["poi_id", "week", "tract_id", "count"], &[])?;
    let mut seen = HashMap::new();
    for row in sheet.rows()? {
        let (p, week) = locate(&row, &by_id)?;
        let id = row.text("tract_id")?;
        let tract = *index
            .get(id)
            .ok_or_else(|| row.error("tract_id", format!("unknown tract `{id}`")))?;
        let count = row.nonnegative("count")?;
        if seen.insert((p, week, tract), ()).is_some() {
            return Err(row.error("tract_id", "duplicate row"));
        }
        if count > 0.0 {
            pois[p].weeks[week].origins.push((tract, count));
        }
    }

    let mut repairs = Vec::new();
    for p in &mut pois {
        for (week, wk) in p.weeks.iter_mut().enumerate() {
            wk.origins.sort_by_key(|(t, _)| *t);
            let before = wk.total_origins();
            if wk.repair_totals(p.home_tract) {
                log::warn!(
                    "POI {} week {week}: {} visits but {before} origin visitors; origins rescaled",
                    p.poi_id,
                    wk.total_visits()
                );
                repairs.push(Repair {
                    poi_id: p.poi_id.clone(),
                    week,
                    visits: wk.total_visits(),
                    origins_before: before,
                });
            }
        }
    }
    Ok((pois, repairs))
}

fn day_file(dir: &Path, day: usize) -> PathBuf {
    dir.join(format!("day_{day:04}.csv"))
}

/// One CSV per day with the nonzero upper-triangle entries.
pub fn write_contacts(dir: &Path, contacts: &ContactMatrixSeries) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for (t, m) in contacts.days().iter().enumerate() {
        let path = day_file(dir, t);
        let mut w = writer(&path)?;
        put(&mut w, &path, ["i", "j", "contacts"])?;
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                if m[(i, j)] != 0.0 {
                    put(&mut w, &path, [i.to_string(), j.to_string(), m[(i, j)].to_string()])?;
                }
            }
        }
        finish(w, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads `day_0000.csv`, `day_0001.csv`, ... until the first missing day.
pub fn read_contacts(dir: &Path, n_tracts: usize) -> Result<ContactMatrixSeries> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "contact directory not found"),
        ));
    }
    let mut days = Vec::new();
    loop {
        let path = day_file(dir, days.len());
        if !path.exists() {
            break;
        }
        let mut sheet = Sheet::open(&path, &["i", "j", "contacts"], &[])?;
        let mut m = DMatrix::zeros(n_tracts, n_tracts);
        for row in sheet.rows()? {
            let i: usize = row.parse("i", "a tract index")?;
            let j: usize = row.parse("j", "a tract index")?;
            if i >= n_tracts || j >= n_tracts || j < i {
                return Err(row.error("j", format!("entry ({i}, {j}) is not in the upper triangle of {n_tracts} tracts")));
            }
            let v = row.nonnegative("contacts")?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        days.push(m);
    }
    if days.is_empty() {
        return Err(Error::Structural(format!("{} holds no day_0000.csv", dir.display())));
    }
    ContactMatrixSeries::new(days)
}

/// Locations of the input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub tracts: PathBuf,
    pub pois: PathBuf,
    pub visits: PathBuf,
    pub origins: PathBuf,
    pub devices: PathBuf,
    pub cases: PathBuf,
}

impl InputPaths {
    /// The standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            tracts: dir.join("tracts.csv"),
            pois: dir.join("pois.csv"),
            visits: dir.join("visits_hourly.csv"),
            origins: dir.join("origins_weekly.csv"),
            devices: dir.join("devices.csv"),
            cases: dir.join("cases_deaths.csv"),
        }
    }

    pub fn all(&self) -> [&Path; 6] {
        [&self.tracts, &self.pois, &self.visits, &self.origins, &self.devices, &self.cases]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub tracts: Vec<Tract>,
    pub mobility: MobilityData,
    pub reports: CaseDeathSeries,
    pub repairs: Vec<Repair>,
}

impl Inputs {
    pub fn populations(&self) -> Vec<f64> {
        self.tracts.iter().map(|t| t.population).collect()
    }
}

pub fn load_inputs(paths: &InputPaths) -> Result<Inputs> {
    let tracts = read_tracts(&paths.tracts)?;
    let devices = read_devices(&paths.devices, &tracts)?;
    let (pois, repairs) = read_pois(&paths.pois, &paths.visits, &paths.origins, &tracts, devices.len())?;
    let reports = read_cases(&paths.cases)?;
    let mobility = MobilityData { pois, devices };
    mobility.validate(tracts.len())?;
    Ok(Inputs {
        tracts,
        mobility,
        reports,
        repairs,
    })
}

#[derive(Serialize)]
struct Truth<'a> {
    params: &'a EpidemicParams,
    initial_exposed: Vec<f64>,
    initial_infected: Vec<f64>,
    sampling_rates: &'a [f64],
    poi_groups: &'a [usize],
    group_names: Vec<&'a str>,
}

#[derive(Serialize)]
struct ScenarioManifest {
    seed: u64,
    files: Vec<String>,
}

/// Writes the observable inputs into `dir` and the ground truth into
/// `dir/truth`, plus `scenario_manifest.json` listing every file written
/// (relative to `dir`) and the seed. Returns the paths written.
pub fn write_scenario(scenario: &SyntheticScenario, dir: &Path) -> Result<Vec<PathBuf>> {
    let paths = InputPaths::in_dir(dir);
    write_tracts(&paths.tracts, &scenario.tracts)?;
    write_pois(&paths.pois, &paths.visits, &paths.origins, &scenario.pois, &scenario.tracts)?;
    write_devices(&paths.devices, &scenario.tracts, &scenario.devices)?;
    write_cases(&paths.cases, &scenario.reports)?;
    let mut written: Vec<PathBuf> = paths.all().iter().map(|p| p.to_path_buf()).collect();

    let truth_dir = dir.join("truth");
    written.extend(write_contacts(&truth_dir.join("contacts"), &scenario.true_contacts)?);
    let n = scenario.tracts.len();
    let truth = Truth {
        params: &scenario.params,
        initial_exposed: (0..n).map(|i| scenario.initial.get(Compartment::E, i)).collect(),
        initial_infected: (0..n).map(|i| scenario.initial.get(Compartment::I, i)).collect(),
        sampling_rates: scenario.sampling_rates.as_slice(),
        poi_groups: &scenario.groups,
        group_names: scenario.config.groups.iter().map(|g| g.name.as_str()).collect(),
    };
    let truth_path = truth_dir.join("truth.json");
    write_json(&truth_path, &truth)?;
    written.push(truth_path);

    let manifest_path = dir.join("scenario_manifest.json");
    let manifest = ScenarioManifest {
        seed: scenario.config.seed,
        files: written
            .iter()
            .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
            .collect(),
    };
    write_json(&manifest_path, &manifest)?;
    written.push(manifest_path);
    Ok(written)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
