use nalgebra::{DMatrix, DVector};

use super::dynamics::{contact_matrix, Linearization};
use super::{observation_matrix, Compartment, ContactMatrixSeries, EpidemicParams, FlowKind};
use crate::ekf::{DifferentiableModel, Jacobian, StateSpaceModel, Transition};
use crate::error::{Error, Result};

/// The SEIRD metapopulation as a filterable state-space model. Filter step
/// `t` uses the contact matrix of day `day_offset + t`.
///
/// Parameters are ordered `beta, kappa, delta, rho` for the gradient.
#[derive(Debug, Clone)]
pub struct SeirdSystem<'a> {
    params: EpidemicParams,
    populations: Vec<f64>,
    contacts: &'a ContactMatrixSeries,
    day_offset: usize,
    h: DMatrix<f64>,
}

impl<'a> SeirdSystem<'a> {
    pub fn new(
        params: EpidemicParams,
        populations: Vec<f64>,
        contacts: &'a ContactMatrixSeries,
        day_offset: usize,
    ) -> Result<Self> {
        if populations.len() != contacts.n_tracts() {
            return Err(Error::Structural(format!(
                "{} populations for contact matrices over {} tracts",
                populations.len(),
                contacts.n_tracts()
            )));
        }
        if let Some(p) = populations.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Structural(format!("population must be positive, got {p}")));
        }
        let h = observation_matrix(populations.len(), &params);
        Ok(Self {
            params,
            populations,
            contacts,
            day_offset,
            h,
        })
    }

    pub fn params(&self) -> &EpidemicParams {
        &self.params
    }

    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    pub fn n_tracts(&self) -> usize {
        self.populations.len()
    }

    fn linearize(&self, step: usize, x: &DVector<f64>) -> Result<Linearization> {
        let m = contact_matrix(self.contacts, self.day_offset + step)?;
        Linearization::at(x.as_slice(), &self.populations, &self.params, m)
    }
}

impl StateSpaceModel for SeirdSystem<'_> {
    fn state_dim(&self) -> usize {
        5 * self.populations.len()
    }

    fn transition(&self, step: usize, x: &DVector<f64>) -> Result<Transition> {
        let lin = self.linearize(step, x)?;
        let mean = lin.next_mean(x.as_slice());
        let noise = lin.process_noise();
        Ok(Transition {
            mean,
            jacobian: Jacobian::Stoich(lin.jacobian),
            noise,
        })
    }

    fn observation_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

impl DifferentiableModel for SeirdSystem<'_> {
    fn n_params(&self) -> usize {
        4
    }

    fn transition_adjoint(
        &self,
        step: usize,
        x: &DVector<f64>,
        jp: &DMatrix<f64>,
        mean_bar: &DVector<f64>,
        cov_bar: &DMatrix<f64>,
        x_bar: &mut DVector<f64>,
        theta_bar: &mut [f64],
    ) -> Result<()> {
        let m = contact_matrix(self.contacts, self.day_offset + step)?;
        let lin = Linearization::at(x.as_slice(), &self.populations, &self.params, m)?;
        let n = lin.n;
        let d = 5 * n;
        let pops = &self.populations;
        let beta = self.params.beta;
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        let endpoints = |row: usize| {
            let (kind, i) = FlowKind::from_row(row, n);
            (kind, i, kind.source().index(i, n), kind.dest().index(i, n))
        };

        // Flow adjoints: through the noise (state and parameters) and through
        // the mean (parameters only; the engine handles J^T mean_bar).
        let mut flow_bar = vec![0.0; 4 * n];
        for row in 0..4 * n {
            let (_, _, src, dst) = endpoints(row);
            let from_noise =
                cov_bar[(src, src)] + cov_bar[(dst, dst)] - cov_bar[(src, dst)] - cov_bar[(dst, src)];
            let (cols, vals) = lin.jacobian.phi.row(row);
            for (c, v) in cols.iter().zip(vals) {
                x_bar[*c] += v * from_noise;
            }
            flow_bar[row] = from_noise + mean_bar[dst] - mean_bar[src];
        }
        for i in 0..n {
            theta_bar[0] += flow_bar[i] * lin.s[i] * ind(lin.unsaturated[i]) * lin.force_base[i];
            theta_bar[1] += flow_bar[n + i] * lin.e[i] * ind(lin.kappa_free);
            let (ir, id) = (flow_bar[2 * n + i], flow_bar[3 * n + i]);
            for k in 0..2 {
                theta_bar[2 + k] +=
                    lin.inf[i] * (ir * lin.d_delta_eff[k] + id * lin.d_rho_eff[k]);
            }
        }

        // Jacobian adjoint 2 * G^T cov_bar (J P), needed only on the sparsity
        // pattern of Phi.
        let cb = cov_bar.as_slice();
        let jps = jp.as_slice();
        let mut z = vec![0.0; d];
        for row in 0..4 * n {
            let (kind, i, src, dst) = endpoints(row);
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = cb[dst * d + k] - cb[src * d + k];
            }
            let (cols, vals) = lin.jacobian.phi.row(row);
            for (c, v) in cols.iter().zip(vals) {
                let col = &jps[c * d..(c + 1) * d];
                let jb = 2.0 * z.iter().zip(col).map(|(a, b)| a * b).sum::<f64>();
                if jb == 0.0 {
                    continue;
                }
                match kind {
                    FlowKind::SE if *c == Compartment::S.index(i, n) => {
                        if lin.s_pos[i] && lin.unsaturated[i] {
                            theta_bar[0] += jb * lin.force_base[i];
                            for j in 0..n {
                                if lin.i_pos[j] && m[(i, j)] > 0.0 {
                                    x_bar[Compartment::I.index(j, n)] +=
                                        jb * beta * m[(i, j)] / (pops[i] * pops[j]);
                                }
                            }
                        }
                    }
                    FlowKind::SE => {
                        let j = *c - Compartment::I.index(0, n);
                        let base = m[(i, j)] / (pops[i] * pops[j]);
                        theta_bar[0] += jb * lin.s[i] * base;
                        x_bar[Compartment::S.index(i, n)] += jb * ind(lin.s_pos[i]) * beta * base;
                        debug_assert!((v - lin.s[i] * beta * base).abs() <= 1e-9 * v.abs().max(1e-300));
                    }
                    FlowKind::EI => {
                        theta_bar[1] += jb * ind(lin.e_pos[i] && lin.kappa_free);
                    }
                    FlowKind::IR | FlowKind::ID => {
                        let dk = if kind == FlowKind::IR {
                            lin.d_delta_eff
                        } else {
                            lin.d_rho_eff
                        };
                        let g = jb * ind(lin.i_pos[i]);
                        theta_bar[2] += g * dk[0];
                        theta_bar[3] += g * dk[1];
                    }
                }
            }
        }
        Ok(())
    }

    fn observation_adjoint(&self, h_bar: &DMatrix<f64>, theta_bar: &mut [f64]) {
        let n = self.populations.len();
        for i in 0..n {
            theta_bar[1] += h_bar[(0, Compartment::E.index(i, n))];
            theta_bar[3] += h_bar[(1, Compartment::I.index(i, n))];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ekf::{run_filter, score, GaussianBelief, ObservationSeries};

    fn setup() -> (ContactMatrixSeries, Vec<f64>, GaussianBelief, ObservationSeries) {
        let m0 = DMatrix::from_row_slice(3, 3, &[90.0, 20.0, 5.0, 20.0, 60.0, 15.0, 5.0, 15.0, 80.0]);
        let days = (0..8).map(|t| &m0 * (1.0 - 0.05 * t as f64)).collect();
        let contacts = ContactMatrixSeries::new(days).unwrap();
        let pops = vec![1000.0, 1500.0, 800.0];
        let mut mean = DVector::zeros(15);
        let seeds = [(20.0, 10.0), (5.0, 3.0), (0.0, 8.0)];
        for i in 0..3 {
            mean[Compartment::E.index(i, 3)] = seeds[i].0;
            mean[Compartment::I.index(i, 3)] = seeds[i].1;
            mean[Compartment::S.index(i, 3)] = pops[i] - seeds[i].0 - seeds[i].1;
        }
        let mut cov = DMatrix::zeros(15, 15);
        for i in 0..3 {
            cov[(i, i)] = 30.0;
            cov[(3 + i, 3 + i)] = 4.0;
            cov[(6 + i, 6 + i)] = 4.0;
        }
        let init = GaussianBelief::new(mean, cov).unwrap();
        let ys: Vec<DVector<f64>> = (0..8)
            .map(|t| DVector::from_column_slice(&[6.0 + t as f64, 0.3 + 0.05 * t as f64]))
            .collect();
        let rs = ys
            .iter()
            .map(|y| DMatrix::from_diagonal(&y.map(|v| (0.1 * v).max(1.0))))
            .collect();
        let obs = ObservationSeries::new(ys, rs).unwrap();
        (contacts, pops, init, obs)
    }

    #[test]
    fn parameter_gradient_matches_central_differences() {
        let (contacts, pops, init, obs) = setup();
        let params = EpidemicParams::new(0.4, 0.25, 0.12, 0.02).unwrap();
        let sys = SeirdSystem::new(params, pops.clone(), &contacts, 0).unwrap();
        let res = score(&sys, &init, &obs).unwrap();
        let base = params.to_array();
        for k in 0..4 {
            let h = 1e-6 * base[k];
            let eval = |delta: f64| {
                let mut a = base;
                a[k] += delta;
                let p = EpidemicParams::new(a[0], a[1], a[2], a[3]).unwrap();
                let s = SeirdSystem::new(p, pops.clone(), &contacts, 0).unwrap();
                run_filter(&s, &init, &obs).unwrap().loglik
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let g = res.grad_params[k];
            assert!(
                (g - fd).abs() <= 1e-5 * g.abs().max(fd.abs()) + 1e-6,
                "param {k}: adjoint {g} vs fd {fd}"
            );
        }
    }

    #[test]
    fn initial_mean_gradient_matches_central_differences() {
        let (contacts, pops, init, obs) = setup();
        let params = EpidemicParams::new(0.4, 0.25, 0.12, 0.02).unwrap();
        let sys = SeirdSystem::new(params, pops, &contacts, 1).unwrap();
        let res = score(&sys, &init, &obs.window(0, 7)).unwrap();
        for k in [0, 1, 4, 6, 8] {
            let h = 1e-4;
            let eval = |delta: f64| {
                let mut b = init.clone();
                b.mean[k] += delta;
                run_filter(&sys, &b, &obs.window(0, 7)).unwrap().loglik
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let g = res.grad_initial_mean[k];
            assert!(
                (g - fd).abs() <= 1e-5 * g.abs().max(fd.abs()) + 1e-6,
                "state {k}: adjoint {g} vs fd {fd}"
            );
        }
    }

    #[test]
    fn contact_days_must_cover_the_window() {
        let (contacts, pops, init, obs) = setup();
        let params = EpidemicParams::new(0.4, 0.25, 0.12, 0.02).unwrap();
        let sys = SeirdSystem::new(params, pops, &contacts, 5).unwrap();
        assert!(matches!(run_filter(&sys, &init, &obs), Err(Error::Structural(_))));
    }
}
