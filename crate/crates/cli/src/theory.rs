use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gogan_core::gogan::GoganChain;
use gogan_core::rng::substream;
use gogan_core::theory::{empirical_geometry, phi_recursion, EmpiricalGeometry, GapGeometry};
use rand::Rng as _;

use crate::common::{eval_batch, join_floats, prepare_data, write_text};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::manifest::RunManifest;

pub const SWEEP_FILE: &str = "theory_sweep.csv";
pub const SUMMARY_FILE: &str = "theory_summary.txt";
pub const EMPIRICAL_FILE: &str = "theory_empirical.txt";

/// Largest allowed gap between the summed and closed-form reduction.
pub const CLOSED_FORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IdentityChecks {
    /// Each `φ_i` equals `(φ_{i−1} − η_i)/2` recomputed from scratch.
    pub recursion: bool,
    pub closed_form: bool,
    /// Reduction reaches `β/2`, with equality exactly in the `N = 1, η = 0` case.
    pub half_bound: bool,
    /// Cumulative reduction strictly increases with each added stage.
    pub monotone: bool,
}

impl IdentityChecks {
    pub fn all(&self) -> bool {
        self.recursion && self.closed_form && self.half_bound && self.monotone
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub geometry: GapGeometry,
    pub tgr: Option<f64>,
    pub bound_margin: Option<f64>,
    /// `None` for infeasible configurations.
    pub checks: Option<IdentityChecks>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub feasible: usize,
    pub infeasible: usize,
    pub recursion: usize,
    pub closed_form: usize,
    pub half_bound: usize,
    pub monotone: usize,
}

impl SweepSummary {
    pub fn passed(&self) -> bool {
        [self.recursion, self.closed_form, self.half_bound, self.monotone]
            .iter()
            .all(|&n| n == self.feasible)
    }
}

pub struct TheoryOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
    pub empirical: Option<EmpiricalGeometry>,
    pub manifest: PathBuf,
}

pub fn check_identities(g: &GapGeometry) -> CliResult<IdentityChecks> {
    let mut prev = g.beta;
    let mut recursion = g.phis.len() == g.etas.len();
    for (eta, phi) in g.etas.iter().zip(&g.phis) {
        recursion &= *phi == (prev - eta) / 2.0;
        prev = *phi;
    }
    let sum = g.tgr_sum()?;
    let closed_form = (sum - g.tgr_closed_form()?).abs() < CLOSED_FORM_TOL;
    let margin = g.check_half_bound()?.margin;
    let tight_case = g.etas.len() == 1 && g.etas[0] == 0.0;
    let half_bound = if tight_case { margin == 0.0 } else { margin > 0.0 };
    let mut monotone = true;
    let mut last = 0.0;
    for k in 1..=g.transitions() {
        let t = g.tgr_prefix(k)?;
        monotone &= t > last;
        last = t;
    }
    Ok(IdentityChecks {
        recursion,
        closed_form,
        half_bound,
        monotone,
    })
}

fn sweep_row(beta: f64, etas: &[f64]) -> CliResult<SweepRow> {
    let geometry = phi_recursion(beta, etas)?;
    if !geometry.is_feasible() {
        return Ok(SweepRow {
            geometry,
            tgr: None,
            bound_margin: None,
            checks: None,
        });
    }
    Ok(SweepRow {
        tgr: Some(geometry.tgr_sum()?),
        bound_margin: Some(geometry.check_half_bound()?.margin),
        checks: Some(check_identities(&geometry)?),
        geometry,
    })
}

/// The tight `β = 1, η = 0` case, then `configs` random feasible draws,
/// then `infeasible_probes` draws with one `η` above the running `φ`.
pub fn sweep(cfg: &ExperimentConfig) -> CliResult<Vec<SweepRow>> {
    let th = &cfg.theory;
    let mut rng = substream(cfg.seed, "theory.sweep");
    let mut rows = vec![sweep_row(1.0, &[0.0])?];
    for probe in 0..th.configs + th.infeasible_probes {
        let beta = rng.random_range(th.beta_min..=th.beta_max);
        let n = rng.random_range(1..=th.max_transitions);
        let breaking = (probe >= th.configs).then(|| rng.random_range(0..n));
        let mut etas = Vec::with_capacity(n);
        let mut phi = beta;
        for i in 0..n {
            let eta = if breaking == Some(i) {
                phi * (1.0 + rng.random_range(0.01..1.0))
            } else {
                phi * rng.random_range(0.0..1.0)
            };
            etas.push(eta);
            phi = ((phi - eta) / 2.0).max(0.0);
        }
        rows.push(sweep_row(beta, &etas)?);
    }
    Ok(rows)
}

pub fn summarize(rows: &[SweepRow]) -> SweepSummary {
    let mut s = SweepSummary::default();
    for r in rows {
        match r.checks {
            None => s.infeasible += 1,
            Some(c) => {
                s.feasible += 1;
                s.recursion += c.recursion as usize;
                s.closed_form += c.closed_form as usize;
                s.half_bound += c.half_bound as usize;
                s.monotone += c.monotone as usize;
            }
        }
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut s = String::from("index,beta,etas,phis,tgr,bound_margin,feasible\n");
    for (i, r) in rows.iter().enumerate() {
        let g = &r.geometry;
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{}",
            g.beta,
            join_floats(&g.etas, ";"),
            join_floats(&g.phis, ";"),
            opt(r.tgr),
            opt(r.bound_margin),
            g.is_feasible()
        );
    }
    s
}

pub fn render_summary(rows: &[SweepRow], s: &SweepSummary) -> String {
    let mut out = format!(
        "configurations: {} ({} feasible, {} infeasible)\n",
        rows.len(),
        s.feasible,
        s.infeasible
    );
    for (name, n) in [
        ("recursion", s.recursion),
        ("closed form", s.closed_form),
        ("half bound", s.half_bound),
        ("monotone", s.monotone),
    ] {
        let _ = writeln!(
            out,
            "{name:<12} {} {n}/{}",
            if n == s.feasible { "pass" } else { "FAIL" },
            s.feasible
        );
    }
    if let Some(t) = rows.first() {
        let _ = writeln!(
            out,
            "tight case (beta = {}, eta = {}): bound margin {}",
            t.geometry.beta,
            join_floats(&t.geometry.etas, ";"),
            opt(t.bound_margin)
        );
    }
    let _ = writeln!(out, "overall: {}", if s.passed() { "PASS" } else { "FAIL" });
    out
}

pub fn render_empirical(g: &EmpiricalGeometry) -> String {
    let mut s = format!("beta = {}\n", g.beta);
    for (i, (real, fake)) in g.stage_means.iter().enumerate() {
        let _ = writeln!(s, "stage {}: mean real score {real}, mean fake score {fake}", i + 1);
    }
    for i in 0..g.etas.len() {
        let _ = writeln!(
            s,
            "transition {}: eta = {}, phi = {}, residual = {}",
            i + 1,
            g.etas[i],
            g.phis[i],
            g.residuals[i]
        );
    }
    let finite = g.residuals.iter().all(|r| r.is_finite());
    let _ = writeln!(s, "residuals finite: {finite}");
    s
}

pub fn run_theory(cfg: &ExperimentConfig, checkpoints: Option<&Path>, out: &Path) -> CliResult<TheoryOutcome> {
    let mut manifest = RunManifest::new("theory", cfg.snapshot());
    let rows = manifest.time("sweep", || sweep(cfg))?;
    let summary = summarize(&rows);
    let chain_dir = checkpoints.map(Path::to_path_buf).or_else(|| cfg.theory.chain.clone());
    let empirical = manifest.time("empirical", || {
        let Some(dir) = &chain_dir else { return Ok(None) };
        let chain = GoganChain::load(dir)?;
        let data = prepare_data(cfg)?;
        let first = chain.stage(1)?;
        let (real, noise) = eval_batch(cfg, &data.test, first.generator.latent_dim(), chain.prior)?;
        Ok(Some(empirical_geometry(&chain, &real, &noise)?))
    })?;

    let mut files = vec![out.join(SWEEP_FILE), out.join(SUMMARY_FILE)];
    write_text(&files[0], &render_sweep(&rows))?;
    write_text(&files[1], &render_summary(&rows, &summary))?;
    if let Some(g) = &empirical {
        let p = out.join(EMPIRICAL_FILE);
        write_text(&p, &render_empirical(g))?;
        files.push(p);
    }
    for f in &files {
        manifest.add_file(out, f)?;
    }
    let manifest = manifest.write(out)?;
    log::info!("theory sweep: {}", if summary.passed() { "PASS" } else { "FAIL" });
    Ok(TheoryOutcome {
        rows,
        summary,
        empirical,
        manifest,
    })
}
