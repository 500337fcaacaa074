//! Command orchestration: manifest in, report (and CSV) out.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::check::{merge_worst, relative, CheckRecord};
use crate::dsl::PotentialField;
use crate::flow::{self, Boundary, FlowError, MetricGrid};
use crate::infogeo::{
    alpha_connection, duality_pairing_check, fisher_metric, hessian_structure_certificate, properness_witness,
    Coordinates, InfoGeoError, SimplexFamily,
};
use crate::manifest::{Manifest, ManifestError};
use crate::report::Report;
use crate::soliton::{
    dual_soliton, einstein_fit, lie_alpha_identity, soliton_residual, steady_killing_check, trace_identity_residual,
    ExpressionField, GradientField, SolitonError, SolitonKind, VectorField, SOLITON_TOLERANCE,
};
use crate::structure::{
    beta_scale_defect, bochner_terms, properness_indicator, riemann_agreement, structure_at, verify_identities,
    LaplacianSource, StructureError, IDENTITY_TOLERANCE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Analyze,
    Verify,
    Soliton,
    Flow,
    Infogeo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Verify => "verify",
            Command::Soliton => "soliton",
            Command::Flow => "flow",
            Command::Infogeo => "infogeo",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub points: Option<usize>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("sample {index} at {point:?}: {message}")]
    Sample { index: usize, point: Vec<f64>, message: String },
    #[error("{0}")]
    Input(String),
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: Report,
    pub csv: Option<String>,
}

/// Bochner check tolerance, relative to the largest term.
pub const BOCHNER_TOLERANCE: f64 = 1e-6;
/// Scale-invariance tolerance on `β`.
pub const SCALE_TOLERANCE: f64 = 1e-12;
/// Exactness tolerance of flow checks.
pub const FLOW_TOLERANCE: f64 = 1e-6;
/// Stokes-identity tolerance on the torus.
pub const STOKES_TOLERANCE: f64 = 1e-7;
/// Tolerance for the simplex checks.
pub const INFOGEO_TOLERANCE: f64 = 1e-10;

const SCALE_FACTORS: [f64; 3] = [0.5, 2.0, 10.0];

pub fn run(command: Command, manifest: &Manifest, opts: &RunOptions) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let seed = opts.seed.unwrap_or(manifest.samples.seed);
    let mut report = Report::new(command.name(), manifest.echo(), seed, opts.tolerance);
    let mut csv = None;
    match command {
        Command::Analyze => analyze(manifest, opts, seed, &mut report)?,
        Command::Verify => verify(manifest, opts, seed, &mut report)?,
        Command::Soliton => soliton(manifest, opts, seed, &mut report)?,
        Command::Flow => csv = Some(flow_command(manifest, &mut report)?),
        Command::Infogeo => infogeo(manifest, opts, seed, &mut report)?,
    }
    report.finalize(start.elapsed().as_secs_f64() * 1e3);
    Ok(RunOutput { report, csv })
}

/// Explicit points followed by `count` seeded uniform draws from the box,
/// keeping only draws accepted by `inside`.
pub fn resolve_samples(
    manifest: &Manifest,
    dim: usize,
    count: usize,
    seed: u64,
    default_box: f64,
    inside: impl Fn(&[f64]) -> bool,
) -> Result<Vec<Vec<f64>>, RunError> {
    let mut out = Vec::new();
    for (index, p) in manifest.samples.points.iter().enumerate() {
        if p.len() != dim {
            return Err(RunError::Sample {
                index,
                point: p.clone(),
                message: format!("expected {dim} coordinates"),
            });
        }
        out.push(p.clone());
    }
    if count == 0 {
        return Ok(out);
    }
    let bounds = match &manifest.samples.bounds {
        Some(b) if b.len() == dim => b.clone(),
        Some(b) => return Err(RunError::Input(format!("[samples] box has {} axes, need {dim}", b.len()))),
        None => vec![[-default_box, default_box]; dim],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0;
    let mut attempts = 0usize;
    while accepted < count {
        attempts += 1;
        if attempts > 10_000 * count {
            return Err(RunError::Input(format!(
                "only {accepted} of {count} random samples fell inside the domain"
            )));
        }
        let x: Vec<f64> = bounds.iter().map(|[lo, hi]| rng.gen_range(*lo..*hi)).collect();
        if inside(&x) {
            out.push(x);
            accepted += 1;
        }
    }
    Ok(out)
}

fn field_samples(
    manifest: &Manifest,
    opts: &RunOptions,
    seed: u64,
) -> Result<(PotentialField, Vec<Vec<f64>>), RunError> {
    let field = manifest.field()?;
    let count = opts.points.unwrap_or(manifest.samples.random);
    let samples = resolve_samples(manifest, field.dim(), count, seed, 1.0, |x| field.contains(x))?;
    if samples.is_empty() {
        return Err(RunError::Input("no sample points: set [samples] points or random".into()));
    }
    Ok((field, samples))
}

fn at_sample<E: std::fmt::Display>(index: usize, x: &[f64]) -> impl FnOnce(E) -> RunError + '_ {
    move |e| RunError::Sample {
        index,
        point: x.to_vec(),
        message: e.to_string(),
    }
}

fn analyze(manifest: &Manifest, opts: &RunOptions, seed: u64, report: &mut Report) -> Result<(), RunError> {
    let (field, samples) = field_samples(manifest, opts, seed)?;
    let mut dumps = Vec::new();
    for (i, x) in samples.iter().enumerate() {
        dumps.push(structure_at(&field, x).map_err(at_sample(i, x))?.to_json());
    }
    report.dump("field", field.id());
    report.dump("samples", &samples);
    report.dump("structure", dumps);
    let proper = properness_indicator(&field, &samples).map_err(|e| RunError::Input(e.to_string()))?;
    report.dump("properness", proper);
    Ok(())
}

#[derive(Serialize)]
struct BochnerDump {
    point: Vec<f64>,
    residual_jet: f64,
    residual_finite_difference: f64,
    residual_without_grad_alpha_term: f64,
    grad_alpha_sq: f64,
}

fn verify(manifest: &Manifest, opts: &RunOptions, seed: u64, report: &mut Report) -> Result<(), RunError> {
    let (field, samples) = field_samples(manifest, opts, seed)?;
    let mut records = Vec::new();
    let mut bochner = Vec::new();
    for (i, x) in samples.iter().enumerate() {
        let sp = structure_at(&field, x).map_err(at_sample(i, x))?;
        merge_worst(&mut records, verify_identities(&sp, IDENTITY_TOLERANCE));
        let rm = riemann_agreement(&field, &sp, IDENTITY_TOLERANCE).map_err(at_sample(i, x))?;
        merge_worst(&mut records, vec![rm, lie_alpha_identity(&sp, IDENTITY_TOLERANCE)]);

        let jet = bochner_terms(&field, x, LaplacianSource::Jet).map_err(at_sample(i, x))?;
        let fd = bochner_terms(&field, x, LaplacianSource::FiniteDifference).map_err(at_sample(i, x))?;
        let anchor = "½ΔR = ∇∇α·γ − ∇_r∇_rα·α + |∇γ|² + |Rm|² + |Ric|² + Ric·β − Ric·∇α − |∇α|²";
        merge_worst(
            &mut records,
            vec![
                CheckRecord::new(
                    "bochner_jet",
                    anchor,
                    relative(jet.residual().abs(), jet.scale()),
                    BOCHNER_TOLERANCE,
                ),
                CheckRecord::new(
                    "bochner_finite_difference",
                    anchor,
                    relative(fd.residual().abs(), fd.scale()),
                    BOCHNER_TOLERANCE,
                ),
            ],
        );
        bochner.push(BochnerDump {
            point: x.clone(),
            residual_jet: jet.residual(),
            residual_finite_difference: fd.residual(),
            residual_without_grad_alpha_term: jet.printed_residual(),
            grad_alpha_sq: jet.grad_alpha_sq,
        });

        let mut worst: f64 = 0.0;
        for c in SCALE_FACTORS {
            let d = beta_scale_defect(&field, x, c).map_err(at_sample(i, x))?;
            worst = worst.max(relative(d, sp.beta.max_abs()));
        }
        merge_worst(
            &mut records,
            vec![CheckRecord::new("beta_scale_invariance", "β(cg) = β(g)", worst, SCALE_TOLERANCE)],
        );
    }
    report.records = records;
    report.dump("field", field.id());
    report.dump("sample_count", samples.len());
    report.dump("bochner", bochner);
    if manifest.output.dump_tensors {
        let sps: Result<Vec<_>, StructureError> =
            samples.iter().map(|x| structure_at(&field, x).map(|s| s.to_json())).collect();
        report.dump("structure", sps.map_err(|e| RunError::Input(e.to_string()))?);
    }
    Ok(())
}

#[derive(Serialize)]
struct SolitonDump {
    point: Vec<f64>,
    residual: f64,
    dual_residual: f64,
    steady: crate::soliton::SteadyReport,
}

fn soliton(manifest: &Manifest, opts: &RunOptions, seed: u64, report: &mut Report) -> Result<(), RunError> {
    let (field, samples) = field_samples(manifest, opts, seed)?;
    let spec = manifest
        .soliton_spec(field.dim())?
        .ok_or_else(|| RunError::Input("soliton command needs a [soliton] section".into()))?;
    let mut records = Vec::new();
    let mut dumps = Vec::new();
    for (i, x) in samples.iter().enumerate() {
        let sp = structure_at(&field, x).map_err(at_sample(i, x))?;
        let (_, residual) = soliton_residual(&sp, &spec).map_err(at_sample(i, x))?;
        let dual = dual_soliton(&sp, &spec).map_err(at_sample(i, x))?;
        let traces = trace_identity_residual(&sp, Some(&spec)).map_err(at_sample(i, x))?;
        let jet = match &spec.kind {
            SolitonKind::Vector(xs) => ExpressionField(xs).jet1(x),
            SolitonKind::Gradient(f) => GradientField { field: &field, f }.jet1(x),
        }
        .map_err(at_sample(i, x))?;
        let steady = steady_killing_check(&sp, &jet);
        let scale = sp.beta.max_abs().max(sp.alpha_norm_sq());
        merge_worst(
            &mut records,
            vec![
                CheckRecord::new("soliton_residual", "β − ½𝓛_X g = λg", residual, SOLITON_TOLERANCE),
                CheckRecord::new(
                    "dual_soliton_residual",
                    "β′ − ½𝓛_{X−2α♯} g = λg",
                    dual.max_residual,
                    SOLITON_TOLERANCE,
                ),
                CheckRecord::new(
                    "koszul_trace_identity",
                    "g^ij β_ij = div α♯ + |α|²",
                    relative(traces.koszul.abs(), scale),
                    SOLITON_TOLERANCE,
                ),
                CheckRecord::new(
                    "soliton_trace",
                    "g^ij β_ij − div X = nλ",
                    traces.soliton.map_or(0.0, f64::abs),
                    SOLITON_TOLERANCE,
                ),
                lie_alpha_identity(&sp, SOLITON_TOLERANCE),
            ],
        );
        dumps.push(SolitonDump {
            point: x.clone(),
            residual,
            dual_residual: dual.max_residual,
            steady,
        });
    }
    report.records = records;
    report.dump("spec", spec.describe());
    report.dump("lambda", spec.lambda);
    report.dump("classification", spec.classification());
    report.dump("einstein_fit", einstein_fit(&field, &samples).map_err(|e: SolitonError| RunError::Input(e.to_string()))?);
    report.dump("samples", dumps);
    Ok(())
}

fn flow_command(manifest: &Manifest, report: &mut Report) -> Result<String, RunError> {
    let section = manifest
        .flow
        .as_ref()
        .ok_or_else(|| RunError::Input("flow command needs a [flow] section".into()))?;
    let field = manifest.field()?;
    let scheme = manifest.flow_scheme()?;
    let input = |e: FlowError| RunError::Input(format!("[flow]: {e}"));
    let steps_f = section.t_end / section.dt;
    let steps = steps_f.round() as usize;
    if (steps_f - steps as f64).abs() > 1e-9 * steps_f.max(1.0) {
        return Err(RunError::Input("[flow] t_end must be a whole number of dt steps".into()));
    }
    let lambda = section.lambda;
    let grid = match section.mode.as_str() {
        "torus" => MetricGrid::torus_from_field(&field, section.nodes).map_err(input)?,
        _ => {
            let origin = section
                .origin
                .clone()
                .ok_or_else(|| RunError::Input("patch flow needs `origin`".into()))?;
            let h = section.h.ok_or_else(|| RunError::Input("patch flow needs `h`".into()))?;
            let boundary = match (section.boundary.as_deref().unwrap_or("einstein"), lambda) {
                ("einstein", Some(l)) => Boundary::einstein(l),
                ("einstein", None) => return Err(RunError::Input("einstein boundary needs `lambda`".into())),
                ("frozen", _) => {
                    let f = field.clone();
                    Boundary::Prescribed(std::sync::Arc::new(move |x, _t| {
                        let h = f.eval_jet(x, 2)?.hessian();
                        Ok(h.iter().enumerate().flat_map(|(i, row)| row[i..].to_vec()).collect())
                    }))
                }
                (other, _) => return Err(RunError::Input(format!("unknown boundary '{other}'"))),
            };
            MetricGrid::patch_from_field(&field, &origin, section.nodes, h, boundary).map_err(input)?
        }
    };
    let run = flow::run_flow(&grid, section.dt, steps, scheme).map_err(input)?;
    let completed = run.diagnostics.records.len() - 1;
    let mut records = vec![CheckRecord::new(
        "flow_completed",
        "g(t) positive definite on [0, t_end]",
        if steps == 0 { 0.0 } else { (steps - completed) as f64 / steps as f64 },
        1e-12,
    )];
    if grid.lattice.periodic {
        let (mut stokes, mut negative) = (0.0f64, 0.0f64);
        for r in &run.diagnostics.records {
            let (b, a) = (r.int_beta_trace.unwrap_or(f64::NAN), r.int_alpha_sq.unwrap_or(f64::NAN));
            stokes = stokes.max(relative((b - a).abs(), b.abs().max(a.abs())));
            negative = negative.max(-a);
        }
        records.push(CheckRecord::new(
            "torus_stokes_identity",
            "∫ g^ij β_ij dv = ∫ |α|² dv",
            stokes,
            STOKES_TOLERANCE,
        ));
        records.push(CheckRecord::new("torus_alpha_sq_nonnegative", "∫ |α|² dv ≥ 0", negative.max(0.0), 1e-12));
    } else if let (Boundary::EinsteinScaling { .. }, Some(l)) = (&grid.boundary, lambda) {
        let c = 1.0 + 2.0 * l * run.grid.t;
        let mut worst: f64 = 0.0;
        for idx in 0..grid.lattice.len() {
            if grid.lattice.is_interior(idx) {
                let k = grid.state.len() / grid.lattice.len();
                for j in idx * k..(idx + 1) * k {
                    worst = worst.max(relative((run.grid.state[j] - c * grid.state[j]).abs(), c * grid.state[j]));
                }
            }
        }
        let ss = flow::self_similarity_diagnostic(&run.grid, &grid).map_err(input)?;
        records.push(CheckRecord::new(
            "einstein_flow_exactness",
            "g(t) = (1 + 2λt) g(0)",
            worst,
            FLOW_TOLERANCE,
        ));
        records.push(CheckRecord::new(
            "self_similarity_factor",
            "ĉ(t) = 1 + 2λt",
            (ss.c_hat - c).abs(),
            FLOW_TOLERANCE,
        ));
    }
    report.records = records;
    report.dump("steps", steps);
    report.dump("final", run.diagnostics.records.last());
    report.dump("blow_up", run.blow_up.as_ref().map(|e| e.to_string()));
    if manifest.output.dump_tensors {
        report.dump("snapshot", run.grid.snapshot());
    }
    Ok(run.diagnostics.to_csv())
}

#[derive(Serialize)]
struct InfoDump {
    point: Vec<f64>,
    metric: Vec<f64>,
    properness_witness_mean_chart: f64,
}

fn infogeo(manifest: &Manifest, opts: &RunOptions, seed: u64, report: &mut Report) -> Result<(), RunError> {
    let section = manifest
        .family
        .as_ref()
        .ok_or_else(|| RunError::Input("infogeo command needs a [family] section".into()))?;
    let coords = manifest.family_coords()?;
    let info = |e: InfoGeoError| RunError::Input(e.to_string());
    let fam = SimplexFamily::new(section.outcomes, coords).map_err(info)?;
    let count = opts.points.unwrap_or(manifest.samples.random);
    let default_box = if coords == Coordinates::Natural { 2.0 } else { 1.0 };
    let samples = resolve_samples(manifest, fam.dim(), count, seed, default_box, |x| fam.probabilities(x).is_ok())?;
    if samples.is_empty() {
        return Err(RunError::Input("no sample points: set [samples] points or random".into()));
    }
    let mean = SimplexFamily::new(section.outcomes, Coordinates::Mean).map_err(info)?;
    let (mut pairing, mut affine) = (0.0f64, 0.0f64);
    let mut dumps = Vec::new();
    for (i, x) in samples.iter().enumerate() {
        for a in [-1.0, 0.0, 0.5, 1.0] {
            pairing = pairing.max(duality_pairing_check(&fam, x, a).map_err(at_sample(i, x))?);
        }
        let c = |a| alpha_connection(&fam, x, a).map(|c| c.coefficients);
        let (p, m, z) = (
            c(0.7).map_err(at_sample(i, x))?,
            c(-0.7).map_err(at_sample(i, x))?,
            c(0.0).map_err(at_sample(i, x))?,
        );
        let sum = p.add(&m).map_err(at_sample(i, x))?;
        affine = affine.max(sum.max_abs_diff(&z.scale(2.0)));
        let mean_point = match coords {
            Coordinates::Natural => fam.to_mean(x).map_err(at_sample(i, x))?,
            Coordinates::Mean => x.clone(),
        };
        dumps.push(InfoDump {
            point: x.clone(),
            metric: fisher_metric(&fam, x).map_err(at_sample(i, x))?.data().to_vec(),
            properness_witness_mean_chart: properness_witness(&mean, &mean_point).map_err(at_sample(i, x))?,
        });
    }
    let mut records = vec![
        CheckRecord::new(
            "duality_pairing",
            "X g(Y,Z) = g(∇^(a)_X Y, Z) + g(Y, ∇^(−a)_X Z)",
            pairing,
            INFOGEO_TOLERANCE,
        ),
        CheckRecord::new("connection_affine_in_a", "Γ^(a) + Γ^(−a) = 2Γ^(0)", affine, 1e-12),
    ];
    if coords == Coordinates::Natural {
        let cert = hessian_structure_certificate(&fam, &samples).map_err(info)?;
        records.push(CheckRecord::new(
            "fisher_vs_log_partition_hessian",
            "g^F_ij = ∂_i∂_j log(1 + Σ e^θ)",
            cert.potential_defect,
            INFOGEO_TOLERANCE,
        ));
        records.push(CheckRecord::new(
            "exponential_connection_flat",
            "Γ^(1) = 0 in natural coordinates",
            cert.flatness_defect,
            INFOGEO_TOLERANCE,
        ));
        report.dump("certificate", cert);
    }
    report.records = records;
    report.dump("family", fam);
    report.dump("samples", dumps);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(src: &str) -> Manifest {
        Manifest::parse(src).unwrap()
    }

    #[test]
    fn quadratic_with_unit_lambda_fails_by_one() {
        let m = manifest(
            "[potential]\nfamily = \"quadratic\"\ndim = 2\n[samples]\npoints = [[0.3, 0.1]]\n\
             [soliton]\nkind = \"vector\"\nlambda = 1.0\nX = [\"0\", \"0\"]\n",
        );
        let out = run(Command::Soliton, &m, &RunOptions::default()).unwrap();
        assert!(!out.report.pass);
        let r = out.report.records.iter().find(|r| r.name == "soliton_residual").unwrap();
        assert_eq!(r.residual, 1.0);
    }

    #[test]
    fn verify_is_deterministic() {
        let m = manifest(
            "[potential]\nfamily = \"log_cone\"\ndim = 2\n[samples]\nrandom = 4\nseed = 11\n\
             box = [[-0.5, 0.5], [0.8, 2.0]]\n",
        );
        let a = run(Command::Verify, &m, &RunOptions::default()).unwrap().report;
        let b = run(Command::Verify, &m, &RunOptions::default()).unwrap().report;
        assert!(a.pass, "{}", a.summary());
        assert_eq!(a.determinism_hash, b.determinism_hash);
        let c = run(Command::Verify, &m, &RunOptions { seed: Some(12), ..Default::default() }).unwrap().report;
        assert_ne!(a.determinism_hash, c.determinism_hash);
    }

    #[test]
    fn sample_errors_carry_context() {
        let m = manifest("[potential]\nexpr = \"x1^2 - x2^2\"\ndim = 2\n[samples]\npoints = [[0.0, 0.0]]\n");
        let err = run(Command::Analyze, &m, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, RunError::Sample { index: 0, .. }), "{err}");
    }
}
