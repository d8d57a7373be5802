//! Experiment orchestration: build the objects a config describes, run the
//! named experiment, persist CSV/snapshots, and assemble the manifest.

use crate::config::{
    ConfigError, Experiment, ExperimentConfig, InitialCondition, KindName, SchemeName,
};
use crate::output::{
    emit_convergence_csv, emit_csv, emit_energy_csv, emit_tail_csv, fmt_float, AssertionRecord,
    OutputError, RunManifest, SnapshotStore,
};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;
use tidal_kdv_core::background::{BackgroundError, PeriodizedBackground, StepProfile};
use tidal_kdv_core::diagnostics::{
    equicontinuity_study, kappa_convergence_study, momentum_drift_rate, DiagnosticsError,
    EnergyReport,
};
use tidal_kdv_core::flows::{
    background_evolution, commuting_composition, evolve, FlowError, FlowSpec, FlowState,
    IntegratorConfig, Scheme,
};
use tidal_kdv_core::schrodinger::{
    diagonal_green, greens_ode_residual, hilbert_schmidt_check, verify_linear_identity,
    verify_quadratic_identity, GreensMethod, SchrodingerError, SchrodingerProblem,
};
use tidal_kdv_core::spectral_grid::{Field, Grid, SpectralError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Schrodinger(#[from] SchrodingerError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Background(#[from] BackgroundError),
}

impl RunError {
    /// Whether this is a numerical divergence (exit code 3) rather than a
    /// configuration/environment problem (exit code 2).
    pub fn is_divergence(&self) -> bool {
        matches!(self, RunError::Flow(FlowError::Divergence { .. }))
            | matches!(
                self,
                RunError::Diagnostics(DiagnosticsError::Flow(FlowError::Divergence { .. }))
            )
    }
}

/// Worker cap for independent κ runs, from `TIDAL_KDV_THREADS` (default 1).
pub fn worker_cap() -> usize {
    std::env::var("TIDAL_KDV_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    grid: Grid,
    assertions: Vec<AssertionRecord>,
    files: Vec<PathBuf>,
    wrap_time: Option<f64>,
    divergence: Option<String>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ExperimentConfig, out: PathBuf) -> Result<Self, RunError> {
        let grid = Grid::new(cfg.n, cfg.l)?;
        fs::create_dir_all(&out).map_err(|source| OutputError::Io {
            path: out.clone(),
            source,
        })?;
        Ok(Runner {
            cfg,
            out,
            grid,
            assertions: Vec::new(),
            files: Vec::new(),
            wrap_time: None,
            divergence: None,
        })
    }

    fn background(&self) -> Result<PeriodizedBackground, RunError> {
        Ok(PeriodizedBackground::new(
            StepProfile::new(self.cfg.c1, self.cfg.c2),
            self.grid,
            self.cfg.x_r,
        )?)
    }

    fn initial_field(&self) -> Field {
        match self.cfg.initial {
            InitialCondition::Zero => Field::zero(self.grid),
            InitialCondition::Gaussian { amplitude, sigma } => {
                Field::from_fn(self.grid, |x| amplitude * (-(x / sigma).powi(2)).exp())
                    .expect("gaussian is finite")
            }
            InitialCondition::Soliton { kappa_s, x0 } => Field::from_fn(self.grid, |x| {
                -2.0 * kappa_s * kappa_s / (kappa_s * (x - x0)).cosh().powi(2)
            })
            .expect("soliton is finite"),
        }
    }

    fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.cfg.dt,
            scheme: match self.cfg.scheme {
                SchemeName::IfRk4 => Scheme::IfRk4,
                SchemeName::Etdrk4 => Scheme::Etdrk4,
            },
            dealias: self.cfg.dealias,
        }
    }

    fn flow_spec(&self) -> Result<FlowSpec, RunError> {
        Ok(match self.cfg.kind {
            KindName::Kdv => FlowSpec::kdv(),
            KindName::TidalKdv => FlowSpec::tidal_kdv(self.background()?),
            KindName::Hk => FlowSpec::hk(self.cfg.kappa.expect("validated")),
            KindName::TidalHk => {
                FlowSpec::tidal_hk(self.cfg.kappa.expect("validated"), self.background()?)
            }
            KindName::KdvWithPotential => {
                // V(t) from the background evolution started at q ≡ 0.
                let bg = self.background()?;
                let pot =
                    background_evolution(&bg, self.cfg.t_final, &self.integrator(), 1)?;
                FlowSpec::kdv_with_potential(pot)
            }
        })
    }

    fn kappas(&self) -> Vec<f64> {
        if !self.cfg.kappa_list.is_empty() {
            self.cfg.kappa_list.clone()
        } else {
            self.cfg.kappa.into_iter().collect()
        }
    }

    fn assert_le(&mut self, name: &str, value: f64, threshold: f64, detail: String) {
        self.assertions.push(AssertionRecord {
            name: name.to_string(),
            passed: value.is_finite() && value <= threshold,
            value,
            threshold,
            detail,
        });
    }

    fn assert_ge(&mut self, name: &str, value: f64, threshold: f64, detail: String) {
        self.assertions.push(AssertionRecord {
            name: name.to_string(),
            passed: value.is_finite() && value >= threshold,
            value,
            threshold,
            detail,
        });
    }

    fn record_file(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    // ------------------------------------------------------------------
    // Experiments
    // ------------------------------------------------------------------

    fn run_simulate(&mut self) -> Result<(), RunError> {
        let spec = self.flow_spec()?;
        let q0 = self.initial_field();
        let cfg = self.integrator();
        let background = spec.background().cloned();
        let mut energies: Vec<EnergyReport> = Vec::new();
        let mut store = if self.cfg.snapshot_every > 0 {
            Some(SnapshotStore::create(&self.out.join("snapshots"), self.grid)?)
        } else {
            None
        };
        let csv_every = self.cfg.csv_every.max(1);
        let snapshot_every = self.cfg.snapshot_every;
        let mut step = 0usize;
        let mut wrap_time = None;
        let mut cb_err: Option<RunError> = None;
        let result = evolve(&spec, q0, self.cfg.t_final, &cfg, |state| {
            if cb_err.is_some() {
                return;
            }
            if state.wrap_flag && wrap_time.is_none() {
                wrap_time = Some(state.time);
            }
            if step % csv_every == 0 {
                match EnergyReport::measure(state, background.as_ref(), &[]) {
                    Ok(r) => energies.push(r),
                    Err(e) => cb_err = Some(e.into()),
                }
            }
            if snapshot_every > 0 && step % snapshot_every == 0 {
                if let Some(s) = store.as_mut() {
                    if let Err(e) = s.push(state.time, &state.q) {
                        cb_err = Some(e.into());
                    }
                }
            }
            step += 1;
        });
        self.wrap_time = wrap_time;
        let energy_path = self.out.join("energies.csv");
        emit_energy_csv(&energy_path, &energies)?;
        self.record_file(energy_path);
        if let Some(s) = store.as_ref() {
            for f in s.finalize()? {
                self.record_file(f);
            }
        }
        if let Some(e) = cb_err {
            return Err(e);
        }
        let final_state = match result {
            Ok(s) => s,
            Err(e @ FlowError::Divergence { .. }) => {
                self.divergence = Some(e.to_string());
                return Err(e.into());
            }
            Err(e) => return Err(e.into()),
        };
        if let (KindName::Kdv, InitialCondition::Soliton { kappa_s, x0 }) =
            (self.cfg.kind, self.cfg.initial)
        {
            let center = x0 + 4.0 * kappa_s * kappa_s * self.cfg.t_final;
            let exact = Field::from_fn(self.grid, |x| {
                -2.0 * kappa_s * kappa_s / (kappa_s * (x - center)).cosh().powi(2)
            })
            .expect("soliton is finite");
            let err = final_state.q.sub(&exact).l2_norm();
            self.assert_le(
                "soliton_shape_error_l2",
                err,
                1e-6,
                format!("kappa_s = {kappa_s}, t = {}", self.cfg.t_final),
            );
        }
        Ok(())
    }

    fn run_identities(&mut self) -> Result<(), RunError> {
        let f = self.initial_field();
        let mut rows = Vec::new();
        for kappa in self.kappas() {
            let linear = verify_linear_identity(&f, kappa)?;
            let quadratic = verify_quadratic_identity(&f, &f, kappa)?;
            let (lhs, rhs) = hilbert_schmidt_check(&f, kappa)?;
            let hs_rel = (lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE);
            rows.push(vec![
                fmt_float(kappa),
                fmt_float(linear),
                fmt_float(quadratic),
                fmt_float(hs_rel),
            ]);
            self.assert_le(
                &format!("linear_identity_kappa_{kappa}"),
                linear,
                1e-8,
                String::new(),
            );
            self.assert_le(
                &format!("quadratic_identity_kappa_{kappa}"),
                quadratic,
                1e-8,
                String::new(),
            );
            self.assert_le(
                &format!("hilbert_schmidt_kappa_{kappa}"),
                hs_rel,
                1e-6,
                String::new(),
            );
        }
        let path = self.out.join("identities.csv");
        emit_csv(&path, "kappa,linear_defect,quadratic_defect,hs_rel_error", rows)?;
        self.record_file(path);
        Ok(())
    }

    fn run_greens(&mut self) -> Result<(), RunError> {
        let kappa = self.kappas().first().copied().expect("validated");
        let mut rows = Vec::new();

        // Free diagonal: every engine must hit 1/2κ.
        let free = SchrodingerProblem::decaying(Field::zero(self.grid), kappa)?;
        let g_free = diagonal_green(&free, GreensMethod::Jost)?;
        let target = 1.0 / (2.0 * kappa);
        let free_err = g_free
            .values()
            .samples()
            .iter()
            .fold(0.0f64, |m, v| m.max((v - target).abs()));
        self.assert_le("free_diagonal", free_err, 1e-10, format!("target {target}"));
        rows.push(vec!["free_diagonal".into(), fmt_float(free_err)]);

        // Constant shift c = 1 against the banded oracle.
        let c = 1.0;
        let const_prob =
            SchrodingerProblem::new(Field::from_fn(self.grid, |_| c)?, kappa, c, c)?;
        let g_const = diagonal_green(&const_prob, GreensMethod::DenseInverse)?;
        let shifted = 1.0 / (2.0 * (kappa * kappa + c).sqrt());
        let const_err = g_const
            .values()
            .samples()
            .iter()
            .fold(0.0f64, |m, v| m.max((v - shifted).abs()));
        self.assert_le("constant_shift", const_err, 1e-8, format!("target {shifted}"));
        rows.push(vec!["constant_shift".into(), fmt_float(const_err)]);

        // Jost vs dense on a step + Gaussian potential.
        let x_r = self.cfg.x_r;
        let c1 = if self.cfg.c1 != 0.0 { self.cfg.c1 } else { 0.4 };
        let v = Field::from_fn(self.grid, |x| {
            c1 * (x.tanh() - (x - x_r).tanh() - 1.0) + (-x * x).exp()
        })?;
        let edge = v.samples()[0];
        let prob = SchrodingerProblem::new(v.clone(), kappa, edge, edge)?;
        let jost = diagonal_green(&prob, GreensMethod::Jost)?;
        let dense = diagonal_green(&prob, GreensMethod::DenseInverse)?;
        let cross = jost.values().sub(dense.values()).linf_norm();
        self.assert_le("jost_vs_dense", cross, 1e-7, String::new());
        rows.push(vec!["jost_vs_dense".into(), fmt_float(cross)]);

        // Defining ODE residual of the marching engine plus 4th-order
        // refinement of its substeps.
        let gauss = Field::from_fn(self.grid, |x| (-x * x).exp())?;
        let gp = SchrodingerProblem::decaying(gauss.clone(), kappa)?;
        let res1 = greens_ode_residual(
            &diagonal_green(&gp, GreensMethod::JostMarching { substeps: 1 })?,
            &gauss,
        );
        let res2 = greens_ode_residual(
            &diagonal_green(&gp, GreensMethod::JostMarching { substeps: 2 })?,
            &gauss,
        );
        self.assert_le("ode_residual", res1, 1e-6, String::new());
        self.assert_ge(
            "ode_residual_refinement",
            res1 / res2,
            8.0,
            format!("coarse {res1:.3e}, fine {res2:.3e}"),
        );
        rows.push(vec!["ode_residual".into(), fmt_float(res1)]);
        rows.push(vec!["ode_residual_refined".into(), fmt_float(res2)]);

        let path = self.out.join("greens.csv");
        emit_csv(&path, "check,value", rows)?;
        self.record_file(path);
        Ok(())
    }

    fn run_convergence(&mut self) -> Result<(), RunError> {
        let background = self.background()?;
        let q0 = self.initial_field();
        let report = kappa_convergence_study(
            &q0,
            &background,
            &self.cfg.kappa_list,
            self.cfg.t_final,
            self.cfg.strong_s,
            &self.integrator(),
            self.cfg.samples,
        )?;
        let path = self.out.join("convergence.csv");
        emit_convergence_csv(&path, &report)?;
        self.record_file(path);
        let ref_path = self.out.join("reference_distance.csv");
        emit_csv(
            &ref_path,
            "kappa,h_minus2_distance",
            report
                .kappa_list
                .iter()
                .zip(&report.reference_distance)
                .map(|(k, d)| vec![fmt_float(*k), fmt_float(*d)]),
        )?;
        self.record_file(ref_path);
        for pair in report.reference_distance.windows(2) {
            self.assert_ge(
                "reference_distance_decreasing",
                pair[0] / pair[1],
                1.0,
                format!("{:.3e} vs {:.3e}", pair[0], pair[1]),
            );
        }
        self.assert_le(
            "fitted_rate",
            report.fitted_rate,
            -1.5,
            format!("distances {:?}", report.reference_distance),
        );
        for (kappa, why) in &report.failures {
            self.assertions.push(AssertionRecord {
                name: format!("member_run_kappa_{kappa}"),
                passed: false,
                value: f64::NAN,
                threshold: 0.0,
                detail: why.clone(),
            });
        }
        Ok(())
    }

    fn run_equicontinuity(&mut self) -> Result<(), RunError> {
        let q0 = self.initial_field();
        let report = equicontinuity_study(
            &q0,
            &self.cfg.kappa_list,
            self.cfg.strong_s,
            self.cfg.t_final,
            &self.integrator(),
            self.cfg.samples,
        )?;
        let path = self.out.join("tails.csv");
        emit_tail_csv(&path, &report)?;
        self.record_file(path);
        for (i, &n) in report.n_list.iter().enumerate() {
            let growth = report.growth_factor(i);
            self.assert_le(&format!("tail_growth_n_{n}"), growth, 3.0, String::new());
        }
        Ok(())
    }

    fn run_commute(&mut self) -> Result<(), RunError> {
        let q0 = self.initial_field();
        let (kappa, varkappa) = (self.cfg.kappa_list[0], self.cfg.kappa_list[1]);
        let t = self.cfg.t_final;
        let fine_cfg = self.integrator();
        let mut coarse_cfg = fine_cfg;
        coarse_cfg.dt = 2.0 * fine_cfg.dt;
        let fine = commuting_composition(&q0, kappa, varkappa, t, t, &fine_cfg)?;
        let coarse = commuting_composition(&q0, kappa, varkappa, t, t, &coarse_cfg)?;
        self.assert_le("commutator_h_minus1", fine, 1e-6, format!("dt = {}", fine_cfg.dt));
        self.assert_ge(
            "commutator_refinement",
            coarse / fine,
            12.0,
            format!("coarse {coarse:.3e}, fine {fine:.3e}"),
        );
        let path = self.out.join("commute.csv");
        emit_csv(
            &path,
            "dt,residual_h_minus1",
            vec![
                vec![fmt_float(coarse_cfg.dt), fmt_float(coarse)],
                vec![fmt_float(fine_cfg.dt), fmt_float(fine)],
            ],
        )?;
        self.record_file(path);
        Ok(())
    }

    fn run_momentum(&mut self) -> Result<(), RunError> {
        let background = self.background()?;
        let spec = FlowSpec::tidal_kdv(background.clone());
        let q0 = self.initial_field();
        let cfg = self.integrator();
        let csv_every = self.cfg.csv_every.max(1);
        let mut trajectory: Vec<FlowState> = Vec::new();
        let mut step = 0usize;
        let mut wrap_time = None;
        let result = evolve(&spec, q0, self.cfg.t_final, &cfg, |state| {
            if state.wrap_flag && wrap_time.is_none() {
                wrap_time = Some(state.time);
            }
            if step % csv_every == 0 {
                trajectory.push(state.clone());
            }
            step += 1;
        });
        self.wrap_time = wrap_time;
        if let Err(e @ FlowError::Divergence { .. }) = result {
            self.divergence = Some(e.to_string());
            return Err(e.into());
        }
        result?;
        let sub_box = self.cfg.sub_box_half.unwrap_or(self.cfg.x_r / 2.0);
        let rate = momentum_drift_rate(&trajectory, &background, sub_box)?;
        let (w_minus, w_plus) = StepProfile::new(self.cfg.c1, self.cfg.c2).limits();
        let target = 2.0 * (w_plus.powi(3) - w_minus.powi(3));
        let energies: Vec<EnergyReport> = trajectory
            .iter()
            .map(|s| EnergyReport::measure(s, Some(&background), &[]))
            .collect::<Result<_, _>>()?;
        let energy_path = self.out.join("energies.csv");
        emit_energy_csv(&energy_path, &energies)?;
        self.record_file(energy_path);
        let drift_path = self.out.join("drift.csv");
        emit_csv(
            &drift_path,
            "drift_rate,target",
            vec![vec![fmt_float(rate), fmt_float(target)]],
        )?;
        self.record_file(drift_path);
        if target != 0.0 {
            self.assert_le(
                "momentum_drift_rate",
                (rate / target - 1.0).abs(),
                0.02,
                format!("rate {rate:.6}, target {target:.6}"),
            );
        } else {
            self.assert_le("momentum_drift_rate", rate.abs(), 1e-6, "target 0".into());
        }
        Ok(())
    }
}

/// Execute the experiment a config describes. On divergence the partial
/// outputs and manifest are still written; the manifest carries the
/// annotation and `RunError::is_divergence` routes the exit code.
pub fn run(cfg: &ExperimentConfig, out_override: Option<&Path>) -> Result<RunManifest, RunError> {
    let out = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_dir.clone());
    let started = unix_now();
    let mut runner = Runner::new(cfg, out.clone())?;
    let outcome = match cfg.experiment {
        Experiment::Simulate => runner.run_simulate(),
        Experiment::Identities => runner.run_identities(),
        Experiment::Greens => runner.run_greens(),
        Experiment::Convergence => runner.run_convergence(),
        Experiment::Equicontinuity => runner.run_equicontinuity(),
        Experiment::Commute => runner.run_commute(),
        Experiment::Momentum => runner.run_momentum(),
    };
    match outcome {
        Ok(()) => {}
        Err(e) if runner.divergence.is_some() => drop(e),
        Err(e) => return Err(e),
    }
    let mut manifest = RunManifest {
        config: cfg.raw.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_s: started,
        finished_unix_s: unix_now(),
        wrap_time: runner.wrap_time,
        divergence: runner.divergence.clone(),
        files: Vec::new(),
        assertions: runner.assertions.clone(),
    };
    for file in &runner.files {
        manifest.add_file(&out, file)?;
    }
    manifest.write(&out)?;
    Ok(manifest)
}
