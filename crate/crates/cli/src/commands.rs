//! Subcommand implementations. Each returns the tables it produced; writing
//! them is left to the caller.

use rayon::prelude::*;

use dislo_core::cell::{psi_limit_on, solve_cell, solve_cell_hardcore, CellMeshParams};
use dislo_core::gamma::{gamma_gap, minimal_compatible_strain, GapOptions};
use dislo_core::korn::{korn_sweep, KornFamily, KornOptions};
use dislo_core::measure::LimitMeasure;
use dislo_core::phi::{build_psi_table, check_burgers_condition, phi, phi_polar, PhiCertificate, PsiSource, PsiTable};
use dislo_core::sim::{
    minimize_energy, scaling_sweep, validate_config, Dislocation, DislocationConfig, Placement, Regime, RhoPreset, SimParams, SweepOptions,
};

use crate::config::{vec2, RunConfig};
use crate::output::Table;
use crate::CliError;

/// Tables plus auxiliary text files `(name, contents)`.
#[derive(Debug, Default)]
pub struct Products {
    pub tables: Vec<Table>,
    pub files: Vec<(String, String)>,
}

pub fn cmd_cell(cfg: &RunConfig) -> Result<Products, CliError> {
    let sec = cfg.section(&cfg.cell, "cell")?;
    let c = cfg.tensor()?;
    let xi = vec2(sec.xi);
    let params = CellMeshParams { n_theta: sec.n_theta, ..CellMeshParams::default() };
    let sols = sec
        .eps
        .par_iter()
        .map(|&eps| match sec.rho {
            Some(rho) => solve_cell_hardcore(&c, xi, eps, rho, &params),
            None => solve_cell(&c, xi, eps, &params),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new("cell", &["eps", "log_inv_eps", "energy", "psi_eps", "iterations", "residual"]);
    for s in &sols {
        table.push(vec![s.eps.into(), (1.0 / s.eps).ln().into(), s.energy.into(), s.value.into(), s.iterations.into(), s.residual.into()]);
    }
    let mut out = Products { tables: vec![table], files: vec![] };
    if sec.extrapolate && sec.rho.is_none() && sec.eps.len() >= 2 {
        let lim = psi_limit_on(&c, xi, &sec.eps, &params)?;
        let mut t = Table::new("cell_limit", &["quantity", "value"]);
        t.push(vec!["psi_limit".into(), lim.value.into()]);
        if let Some(p) = lim.profile_value {
            t.push(vec!["psi_profile".into(), p.into()]);
        }
        t.push(vec!["rate_constant".into(), lim.rate_constant.into()]);
        for (k, e) in lim.estimates.iter().enumerate() {
            t.push(vec![format!("estimate_{k}").into(), (*e).into()]);
        }
        out.tables.push(t);
    }
    Ok(out)
}

fn psi_source(name: Option<&str>, c: &dislo_core::elastic::ElasticTensor) -> Result<PsiSource, CliError> {
    match name {
        None => Ok(PsiSource::default_for(c)),
        Some("toy-analytic") => Ok(PsiSource::ToyAnalytic),
        Some("profile-quadrature") => Ok(PsiSource::ProfileQuadrature),
        Some("cell-extrapolated") => Ok(PsiSource::CellExtrapolated(CellMeshParams::default())),
        Some(other) => Err(CliError::Config(format!("unknown psi source '{other}'"))),
    }
}

fn certificate_row(cert: &PhiCertificate) -> Vec<crate::output::Cell> {
    let mut row = vec![cert.xi.x.into(), cert.xi.y.into(), cert.value.into()];
    for k in 0..2 {
        match cert.terms.get(k) {
            Some((l, v)) => row.extend([(*l).into(), v.x.into(), v.y.into()]),
            None => row.extend([0.0.into(), 0.0.into(), 0.0.into()]),
        }
    }
    row.extend([cert.feasibility_residual.into(), cert.optimality_residual.into()]);
    row
}

const CERT_HEADER: [&str; 11] = ["xi_1", "xi_2", "phi", "lambda_1", "b1_x", "b1_y", "lambda_2", "b2_x", "b2_y", "feasibility", "optimality"];

pub fn cmd_phi(cfg: &RunConfig, check_burgers: bool) -> Result<Products, CliError> {
    let sec = cfg.section(&cfg.phi, "phi")?;
    let c = cfg.tensor()?;
    let source = psi_source(sec.source.as_deref(), &c)?;
    let table = build_psi_table(&c, &cfg.burgers()?, sec.radius, &source)?;
    let mut psi = Table::new("psi_table", &["z", "xi_1", "xi_2", "psi"]);
    for e in &table.entries {
        let z: Vec<String> = e.lattice.coeffs.iter().map(|k| k.to_string()).collect();
        psi.push(vec![z.join(" ").into(), e.lattice.vector.x.into(), e.lattice.vector.y.into(), e.psi.into()]);
    }
    let mut polar = Table::new("phi_polar", &["theta", "phi"]);
    for (th, v) in phi_polar(&table, sec.polar_samples)? {
        polar.push(vec![th.into(), v.into()]);
    }
    let mut certs = Table::new("phi_certificates", &CERT_HEADER);
    for p in &sec.probes {
        certs.push(certificate_row(&phi(vec2(*p), &table)?));
    }
    let mut out = Products { tables: vec![psi, polar, certs], files: vec![] };
    if check_burgers || sec.check_burgers {
        out.tables.push(burgers_table(&table, sec.z_max));
    }
    Ok(out)
}

fn burgers_table(table: &PsiTable, z_max: i64) -> Table {
    let check = check_burgers_condition(table, z_max);
    let mut t = Table::new("burgers_check", &["holds", "z_max", "representatives", "witness_z", "lhs", "rhs"]);
    let (z, lhs, rhs) = match &check.witness {
        Some((z, l, r)) => (z.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "), *l, *r),
        None => (String::new(), 0.0, 0.0),
    };
    t.push(vec![check.holds.into(), check.z_max.into(), check.representatives.len().into(), z.into(), lhs.into(), rhs.into()]);
    t
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Products, CliError> {
    let sec = cfg.section(&cfg.simulate, "simulate")?;
    let c = cfg.tensor()?;
    let domain = cfg.domain()?;
    let conf = DislocationConfig::new(
        sec.dislocations.iter().map(|d| Dislocation { position: vec2(d.position), burgers: vec2(d.burgers) }).collect(),
        sec.eps,
        sec.rho,
    );
    let violations = validate_config(&domain, &conf);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Config(format!("inadmissible configuration:\n  {}", list.join("\n  "))));
    }
    let (_, rep) = minimize_energy(&domain, &conf, &c, &SimParams::default())?;
    let mut summary = Table::new("simulate", &["quantity", "value"]);
    for (k, v) in [
        ("total", rep.total),
        ("self", rep.self_energy),
        ("interaction", rep.interaction),
        ("eps", rep.eps),
        ("rho", rep.rho),
        ("skew_integral", rep.skew_integral),
        ("area", rep.area),
    ] {
        summary.push(vec![k.into(), v.into()]);
    }
    summary.push(vec!["count".into(), (rep.count as f64).into()]);
    let mut per = Table::new("dislocations", &["index", "x", "y", "b_1", "b_2", "self_energy"]);
    for (i, (d, e)) in conf.dislocations.iter().zip(&rep.per_dislocation).enumerate() {
        per.push(vec![i.into(), d.position.x.into(), d.position.y.into(), d.burgers.x.into(), d.burgers.y.into(), (*e).into()]);
    }
    Ok(Products { tables: vec![summary, per], files: vec![] })
}

fn placement(name: Option<&str>) -> Result<Placement, CliError> {
    match name {
        None | Some("balanced") => Ok(Placement::Balanced),
        Some("lattice") => Ok(Placement::Lattice),
        Some(other) => Err(CliError::Config(format!("unknown placement '{other}'"))),
    }
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Products, CliError> {
    let sec = cfg.section(&cfg.sweep, "sweep")?;
    let c = cfg.tensor()?;
    let domain = cfg.domain()?;
    let regime: Regime = sec.regime.parse().map_err(|e: dislo_core::Error| CliError::Config(e.to_string()))?;
    let target = sec.target()?;
    let LimitMeasure::PiecewiseConstant(regions) = &target else { unreachable!() };
    let psi = build_psi_table(&c, &cfg.burgers()?, sec.phi_radius, &PsiSource::default_for(&c))?;
    let decomps = regions.iter().map(|r| phi(r.density, &psi)).collect::<Result<Vec<_>, _>>()?;
    let rho = sec.rho_power.map_or(RhoPreset::Recovery, RhoPreset::Power);
    let opts = SweepOptions { placement: placement(sec.placement.as_deref())?, rho, sim: SimParams::default() };
    let mut out = Products::default();
    if sec.eps.is_empty() {
        return Ok(out);
    }
    let sweep = scaling_sweep(regime, &c, &domain, &sec.eps, &target, &decomps, &opts)?;
    let mut t = Table::new(
        "sweep",
        &["eps", "n_eps", "count", "rho", "rho_clipped", "e_self", "e_inter", "e_total", "rescaled", "self_per_dislocation_per_log"],
    );
    for r in &sweep.rows {
        t.push(vec![
            r.eps.into(),
            r.n_eps.into(),
            r.count.into(),
            r.rho.into(),
            r.rho_clipped.into(),
            r.e_self.into(),
            r.e_inter.into(),
            r.e_total.into(),
            r.rescaled.into(),
            r.self_per_dislocation_per_log().into(),
        ]);
    }
    out.tables.push(t);
    let mut fit = Table::new("sweep_fit", &["quantity", "value"]);
    if let Some(e) = sweep.inter_exponent {
        fit.push(vec!["interaction_exponent".into(), e.into()]);
    }
    if let Some(e) = sweep.self_exponent {
        fit.push(vec!["self_exponent".into(), e.into()]);
    }
    if !fit.rows.is_empty() {
        out.tables.push(fit);
    }
    if sec.gap {
        let beta = minimal_compatible_strain(domain.mesh.clone(), &target, &c)?;
        let phi_fn = |x| phi(x, &psi).map(|p| p.value);
        let gopts = GapOptions { placement: opts.placement, rho: opts.rho, sim: opts.sim.clone() };
        let rows = gamma_gap(&target, &beta, &c, regime, &sec.eps, &decomps, &domain, &phi_fn, &gopts)?;
        let mut g = Table::new("gap", &["eps", "N_eps", "discrete", "limit", "gap", "gap_pct"]);
        for r in rows {
            g.push(vec![r.eps.into(), r.n_eps.into(), r.discrete.into(), r.limit.into(), r.gap.into(), r.gap_pct.into()]);
        }
        out.tables.push(g);
    }
    Ok(out)
}

pub fn cmd_korn(cfg: &RunConfig) -> Result<Products, CliError> {
    let sec = cfg.section(&cfg.korn, "korn")?;
    let family: KornFamily = sec.family.parse().map_err(|e: dislo_core::Error| CliError::Config(e.to_string()))?;
    let opts = KornOptions {
        mesh_size: sec.mesh_size,
        degree: sec.degree,
        dislocations: sec.dislocations,
        power_steps: sec.power_steps,
        ..KornOptions::default()
    };
    let sweep = korn_sweep(family, sec.samples, cfg.seed, &opts)?;
    let mut samples = Table::new("korn", &["sample", "ratio"]);
    for (d, r) in &sweep.ratios {
        samples.push(vec![d.clone().into(), (*r).into()]);
    }
    let mut summary = Table::new("korn_summary", &["family", "seed", "samples", "constant", "worst"]);
    summary.push(vec![family.name().into(), (cfg.seed as i64).into(), sweep.ratios.len().into(), sweep.constant.into(), sweep.worst.clone().into()]);
    // replay file: the configuration reduced to the worst sample
    let mut replay = String::from("# worst sample of the sweep\n");
    for kv in sweep.worst.split_whitespace() {
        if let Some((k, v)) = kv.split_once('=') {
            if v.parse::<u64>().is_ok() {
                replay.push_str(&format!("{k} = {v}\n"));
            } else {
                replay.push_str(&format!("{k} = \"{v}\"\n"));
            }
        }
    }
    replay.push_str(&format!("ratio = {:.16e}\n", sweep.constant));
    Ok(Products { tables: vec![samples, summary], files: vec![("korn_worst.toml".into(), replay)] })
}
