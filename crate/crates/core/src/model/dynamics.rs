use nalgebra::{DMatrix, DVector};

use super::{
    Compartment, ContactMatrixSeries, EpidemicParams, MetapopState, TransitionRates,
    N_COMPARTMENTS,
};
use crate::error::{Error, Result};

/// Diagonal jitter added to the process noise so it is numerically positive definite.
pub const PROCESS_NOISE_JITTER: f64 = 1e-8;

/// The four transitions. Flow vectors use kind-major ordering
/// `kind * n_tracts + tract`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    SE = 0,
    EI = 1,
    IR = 2,
    ID = 3,
}

impl FlowKind {
    pub const ALL: [FlowKind; 4] = [FlowKind::SE, FlowKind::EI, FlowKind::IR, FlowKind::ID];

    pub fn source(self) -> Compartment {
        match self {
            FlowKind::SE => Compartment::S,
            FlowKind::EI => Compartment::E,
            FlowKind::IR | FlowKind::ID => Compartment::I,
        }
    }

    pub fn dest(self) -> Compartment {
        match self {
            FlowKind::SE => Compartment::E,
            FlowKind::EI => Compartment::I,
            FlowKind::IR => Compartment::R,
            FlowKind::ID => Compartment::D,
        }
    }

    #[inline]
    pub(crate) fn from_row(row: usize, n: usize) -> (FlowKind, usize) {
        (FlowKind::ALL[row / n], row % n)
    }
}

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, Default)]
pub(crate) struct SparseRows {
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) cols: Vec<usize>,
    pub(crate) vals: Vec<f64>,
}

impl SparseRows {
    fn with_rows(n_rows: usize, nnz_hint: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        row_ptr.push(0);
        Self {
            row_ptr,
            cols: Vec::with_capacity(nnz_hint),
            vals: Vec::with_capacity(nnz_hint),
        }
    }

    #[inline]
    fn push(&mut self, col: usize, val: f64) {
        self.cols.push(col);
        self.vals.push(val);
    }

    #[inline]
    fn end_row(&mut self) {
        self.row_ptr.push(self.cols.len());
    }

    #[inline]
    pub(crate) fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub(crate) fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }
}

/// Jacobian of the mean step in the factored form `J = I + G * Phi`, where
/// `G` is the stoichiometry matrix of the four transitions and `Phi` the
/// sparse derivative of the flows with respect to the state.
#[derive(Debug, Clone)]
pub struct StoichJacobian {
    n_tracts: usize,
    pub(crate) phi: SparseRows,
}

impl StoichJacobian {
    pub fn dim(&self) -> usize {
        N_COMPARTMENTS * self.n_tracts
    }

    #[inline]
    fn endpoints(&self, row: usize) -> (usize, usize) {
        let n = self.n_tracts;
        let (kind, i) = FlowKind::from_row(row, n);
        (kind.source().index(i, n), kind.dest().index(i, n))
    }

    /// `out = J a`.
    pub fn apply_vec(&self, a: &[f64], out: &mut [f64]) {
        out.copy_from_slice(a);
        for r in 0..self.phi.n_rows() {
            let (cols, vals) = self.phi.row(r);
            let w: f64 = cols.iter().zip(vals).map(|(c, v)| v * a[*c]).sum();
            if w != 0.0 {
                let (src, dst) = self.endpoints(r);
                out[src] -= w;
                out[dst] += w;
            }
        }
    }

    /// `out = J^T a`.
    pub fn apply_transpose_vec(&self, a: &[f64], out: &mut [f64]) {
        out.copy_from_slice(a);
        for r in 0..self.phi.n_rows() {
            let (src, dst) = self.endpoints(r);
            let w = a[dst] - a[src];
            if w != 0.0 {
                let (cols, vals) = self.phi.row(r);
                for (c, v) in cols.iter().zip(vals) {
                    out[*c] += v * w;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut j = DMatrix::identity(d, d);
        for r in 0..self.phi.n_rows() {
            let (src, dst) = self.endpoints(r);
            let (cols, vals) = self.phi.row(r);
            for (c, v) in cols.iter().zip(vals) {
                j[(src, *c)] -= v;
                j[(dst, *c)] += v;
            }
        }
        j
    }
}

/// Everything the filter needs from one evaluation of the dynamics at a
/// state: realized flows, their state derivative, and the clamping and
/// saturation pattern used to produce them.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub(crate) n: usize,
    /// Mean flows (after outflow rescaling), kind-major.
    pub flows: Vec<f64>,
    pub(crate) raw: TransitionRates,
    /// Compartment values clamped at zero.
    pub(crate) s: Vec<f64>,
    pub(crate) e: Vec<f64>,
    pub(crate) inf: Vec<f64>,
    pub(crate) s_pos: Vec<bool>,
    pub(crate) e_pos: Vec<bool>,
    pub(crate) i_pos: Vec<bool>,
    /// `sum_j M_ij I_j / (N_i N_j)`; the per-susceptible force is `beta` times this.
    pub(crate) force_base: Vec<f64>,
    /// Whether the S outflow is below the compartment content.
    pub(crate) unsaturated: Vec<bool>,
    pub(crate) kappa_free: bool,
    /// Partials of `(delta_eff, rho_eff)` with respect to `(delta, rho)`.
    pub(crate) d_delta_eff: [f64; 2],
    pub(crate) d_rho_eff: [f64; 2],
    pub jacobian: StoichJacobian,
}

fn check_inputs(values: &[f64], pops: &[f64], m: &DMatrix<f64>) -> Result<usize> {
    let n = pops.len();
    if values.len() != N_COMPARTMENTS * n {
        return Err(Error::Structural(format!(
            "state length {} does not match {} tracts",
            values.len(),
            n
        )));
    }
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Structural(format!(
            "contact matrix is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::numeric("state contains NaN"));
    }
    if m.iter().any(|v| v.is_nan()) {
        return Err(Error::numeric("contact matrix contains NaN"));
    }
    Ok(n)
}

impl Linearization {
    /// Evaluates flows and their derivatives at a raw state vector, which
    /// may contain negative entries (they are clamped to zero).
    pub fn at(
        values: &[f64],
        pops: &[f64],
        params: &EpidemicParams,
        m: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = check_inputs(values, pops, m)?;
        let [beta, kappa, delta, rho] = params.to_array();
        if [beta, kappa, delta, rho].iter().any(|v| v.is_nan()) {
            return Err(Error::numeric("parameters contain NaN"));
        }
        let comp = |c: Compartment, i: usize| values[c.index(i, n)];

        let s_pos: Vec<bool> = (0..n).map(|i| comp(Compartment::S, i) > 0.0).collect();
        let e_pos: Vec<bool> = (0..n).map(|i| comp(Compartment::E, i) > 0.0).collect();
        let i_pos: Vec<bool> = (0..n).map(|i| comp(Compartment::I, i) > 0.0).collect();
        let s: Vec<f64> = (0..n).map(|i| comp(Compartment::S, i).max(0.0)).collect();
        let e: Vec<f64> = (0..n).map(|i| comp(Compartment::E, i).max(0.0)).collect();
        let inf: Vec<f64> = (0..n).map(|i| comp(Compartment::I, i).max(0.0)).collect();

        let force_base: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| m[(i, j)] * inf[j] / pops[j])
                    .sum::<f64>()
                    / pops[i]
            })
            .collect();
        let force: Vec<f64> = force_base.iter().map(|g| beta * g).collect();
        let unsaturated: Vec<bool> = force.iter().map(|f| *f < 1.0).collect();

        let kappa_eff = kappa.min(1.0);
        let kappa_free = kappa < 1.0;
        let i_out = delta + rho;
        let (delta_eff, rho_eff, d_delta_eff, d_rho_eff) = if i_out <= 1.0 {
            (delta, rho, [1.0, 0.0], [0.0, 1.0])
        } else {
            let sq = i_out * i_out;
            (
                delta / i_out,
                rho / i_out,
                [rho / sq, -delta / sq],
                [-rho / sq, delta / sq],
            )
        };

        let raw = TransitionRates {
            s_to_e: (0..n).map(|i| force[i] * s[i]).collect(),
            e_to_i: e.iter().map(|e| kappa * e).collect(),
            i_to_r: inf.iter().map(|x| delta * x).collect(),
            i_to_d: inf.iter().map(|x| rho * x).collect(),
        };

        let mut flows = vec![0.0; 4 * n];
        for i in 0..n {
            flows[i] = s[i] * force[i].min(1.0);
            flows[n + i] = e[i] * kappa_eff;
            flows[2 * n + i] = inf[i] * delta_eff;
            flows[3 * n + i] = inf[i] * rho_eff;
        }

        let mut phi = SparseRows::with_rows(4 * n, n * n + 4 * n);
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        for i in 0..n {
            phi.push(Compartment::S.index(i, n), ind(s_pos[i]) * force[i].min(1.0));
            if unsaturated[i] {
                let scale = s[i] * beta / pops[i];
                for j in 0..n {
                    if i_pos[j] && m[(i, j)] > 0.0 {
                        phi.push(Compartment::I.index(j, n), scale * m[(i, j)] / pops[j]);
                    }
                }
            }
            phi.end_row();
        }
        for i in 0..n {
            phi.push(Compartment::E.index(i, n), ind(e_pos[i]) * kappa_eff);
            phi.end_row();
        }
        for i in 0..n {
            phi.push(Compartment::I.index(i, n), ind(i_pos[i]) * delta_eff);
            phi.end_row();
        }
        for i in 0..n {
            phi.push(Compartment::I.index(i, n), ind(i_pos[i]) * rho_eff);
            phi.end_row();
        }

        Ok(Self {
            n,
            flows,
            raw,
            s,
            e,
            inf,
            s_pos,
            e_pos,
            i_pos,
            force_base,
            unsaturated,
            kappa_free,
            d_delta_eff,
            d_rho_eff,
            jacobian: StoichJacobian {
                n_tracts: n,
                phi,
            },
        })
    }

    /// Next-day mean `x + G * flows`.
    pub fn next_mean(&self, values: &[f64]) -> DVector<f64> {
        let n = self.n;
        let mut next = DVector::from_column_slice(values);
        for kind in FlowKind::ALL {
            for i in 0..n {
                let f = self.flows[kind as usize * n + i];
                next[kind.source().index(i, n)] -= f;
                next[kind.dest().index(i, n)] += f;
            }
        }
        // A rescaled outflow empties its compartment up to rounding.
        for (v, x) in next.iter_mut().zip(values) {
            if *v < 0.0 && *x >= 0.0 {
                *v = 0.0;
            }
        }
        next
    }

    /// Linear-noise covariance `G diag(flows) G^T + jitter * I`.
    pub fn process_noise(&self) -> DMatrix<f64> {
        let n = self.n;
        let d = N_COMPARTMENTS * n;
        let mut q = DMatrix::identity(d, d) * PROCESS_NOISE_JITTER;
        for kind in FlowKind::ALL {
            for i in 0..n {
                let f = self.flows[kind as usize * n + i];
                let (a, b) = (kind.source().index(i, n), kind.dest().index(i, n));
                q[(a, a)] += f;
                q[(b, b)] += f;
                q[(a, b)] -= f;
                q[(b, a)] -= f;
            }
        }
        q
    }
}

pub(crate) fn contact_matrix(contacts: &ContactMatrixSeries, day: usize) -> Result<&DMatrix<f64>> {
    contacts.day(day).ok_or_else(|| {
        Error::Structural(format!(
            "contact series has {} days, day {day} requested",
            contacts.len()
        ))
    })
}

/// Raw Poisson intensities on the zero-clamped state.
pub fn transition_rates(
    state: &MetapopState,
    params: &EpidemicParams,
    m: &DMatrix<f64>,
) -> Result<TransitionRates> {
    Ok(Linearization::at(state.values().as_slice(), state.populations(), params, m)?.raw)
}

/// One day of mean-field propagation. Outflows that would exceed a
/// compartment are scaled down to empty it, so mass is conserved and the
/// result stays nonnegative for nonnegative input.
pub fn mean_step(
    state: &MetapopState,
    params: &EpidemicParams,
    m: &DMatrix<f64>,
) -> Result<MetapopState> {
    let x = state.values().as_slice();
    let lin = Linearization::at(x, state.populations(), params, m)?;
    MetapopState::from_parts(state.populations().to_vec(), lin.next_mean(x))
}

/// Dense `5n x 5n` Jacobian of [`mean_step`] in compartment-major order.
/// Clamped compartments contribute a zero subgradient.
pub fn state_jacobian(
    state: &MetapopState,
    params: &EpidemicParams,
    m: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let lin = Linearization::at(state.values().as_slice(), state.populations(), params, m)?;
    Ok(lin.jacobian.to_dense())
}

pub fn process_noise(
    state: &MetapopState,
    params: &EpidemicParams,
    m: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let lin = Linearization::at(state.values().as_slice(), state.populations(), params, m)?;
    Ok(lin.process_noise())
}

/// Expected daily new cases `kappa * sum E` and deaths `rho * sum I`.
pub fn observe(state: &MetapopState, params: &EpidemicParams) -> DVector<f64> {
    observation_matrix(state.n_tracts(), params) * state.values()
}

/// Constant observation Jacobian: `kappa` in the E columns of row 0 and
/// `rho` in the I columns of row 1.
pub fn observation_matrix(n_tracts: usize, params: &EpidemicParams) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(2, N_COMPARTMENTS * n_tracts);
    for i in 0..n_tracts {
        h[(0, Compartment::E.index(i, n_tracts))] = params.kappa;
        h[(1, Compartment::I.index(i, n_tracts))] = params.rho;
    }
    h
}
