use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::Deserialize;

use pearlknot::algebra::{
    self, abelianization, branched_cover, cover_h1, fiber_restriction, hom_count, semidirect,
    truncated_wild_presentation, AlgebraError, Endomorphism, FreeWord, Presentation, TargetGroup,
};
use pearlknot::census::{self, CensusError};
use pearlknot::geometry::STAGE_TOL;
use pearlknot::knot::{builtin, BuiltinKnot, PolygonalKnot};
use pearlknot::necklace::{build, fuchsian, verify, PearlNecklace};
use pearlknot::orbit::{
    check_nesting, export_stage, import_cloud_json, import_stage_json, initial_stage, next_stage,
    refine, ExportFormat, Exportable, OrbitError, PointCloud,
};

use crate::report::Report;
use crate::{CensusArgs, ExportArgs, Format, MonodromyArgs, NecklaceArgs, OrbitArgs, Outcome};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_BUDGET: u8 = 3;
pub const EXIT_OVERFLOW: u8 = 4;
pub const EXIT_SEARCH: u8 = 5;

pub struct Failure {
    pub error: anyhow::Error,
    pub code: u8,
    /// Partial statistics to print before the diagnostic.
    pub report: Option<Report>,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = exit_code(&error);
        Failure {
            error,
            code,
            report: None,
        }
    }
}

fn exit_code(error: &anyhow::Error) -> u8 {
    for cause in error.chain() {
        if let Some(e) = cause.downcast_ref::<OrbitError>() {
            match e {
                OrbitError::BudgetExceeded { .. } => return EXIT_BUDGET,
                OrbitError::Overflow(_) => return EXIT_OVERFLOW,
                _ => {}
            }
        }
        if let Some(CensusError::Overflow) = cause.downcast_ref::<CensusError>() {
            return EXIT_OVERFLOW;
        }
        if let Some(AlgebraError::SearchTooLarge(_)) = cause.downcast_ref::<AlgebraError>() {
            return EXIT_SEARCH;
        }
    }
    EXIT_FAILURE
}

type CmdResult = Result<Outcome, Failure>;

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("cannot parse {}", path.display()))
}

/// Render fully in memory, then write; a failed run leaves no file behind.
fn write_output(
    path: &Path,
    render: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    render(&mut buf)?;
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

fn load_knot(source: &str) -> anyhow::Result<PolygonalKnot> {
    match source.parse::<BuiltinKnot>() {
        Ok(kind) => Ok(builtin(kind)),
        Err(_) if Path::new(source).exists() => read_json(Path::new(source)),
        Err(e) => Err(anyhow!(e).context("not a built-in knot and no such file")),
    }
}

pub fn necklace(args: &NecklaceArgs) -> CmdResult {
    let necklace = match (args.fuchsian, &args.knot) {
        (Some(m), _) => fuchsian(m as usize)?,
        (None, Some(source)) => build(&load_knot(source)?, args.pearls as usize)?,
        (None, None) => unreachable!("clap requires --knot or --fuchsian"),
    };
    let report = verify(&necklace, args.tol);
    if let Some(path) = &args.out {
        write_output(path, |buf| {
            serde_json::to_writer(&mut *buf, &necklace)?;
            buf.push(b'\n');
            Ok(())
        })?;
    }
    let radii: Vec<f64> = necklace.pearls().iter().map(|p| p.radius).collect();
    let out = Report::new()
        .with("n", report.n)
        .with("valid", report.valid)
        .with("max_tangency_error", report.max_tangency_error)
        .with("min_separation_margin", report.min_separation_margin)
        .with("covered", report.covered)
        .with("arcs_connected", report.arcs_connected)
        .with(
            "min_radius",
            radii.iter().cloned().fold(f64::INFINITY, f64::min),
        )
        .with("max_radius", radii.iter().cloned().fold(0.0, f64::max));
    Ok(Outcome {
        report: out,
        code: if report.valid { 0 } else { EXIT_FAILURE },
    })
}

pub fn orbit(args: &OrbitArgs) -> CmdResult {
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }
    if args.budget == 0 {
        return Err(anyhow!("--budget must be positive").into());
    }
    let necklace: PearlNecklace = read_json(&args.necklace)?;
    match (args.depth, args.eps) {
        (Some(depth), None) => orbit_depth(args, &necklace, depth),
        (None, Some(eps)) => orbit_eps(args, &necklace, eps),
        _ => unreachable!("clap enforces exactly one of --depth and --eps"),
    }
}

fn orbit_depth(args: &OrbitArgs, necklace: &PearlNecklace, depth: usize) -> CmdResult {
    let n = necklace.len() as u64;
    let mut current = initial_stage(necklace);
    let mut nesting_ok = true;
    let mut created = current.len();
    while current.k < depth {
        match next_stage(necklace, &current, args.budget) {
            Ok(next) => {
                nesting_ok &= check_nesting(&next, &current, STAGE_TOL)?;
                created += next.len();
                current = next;
            }
            Err(e @ OrbitError::BudgetExceeded { .. }) => {
                let partial = Report::new()
                    .with("completed_depth", current.k)
                    .with("count", current.len())
                    .with("max_diameter", current.max_diameter())
                    .with("nesting_ok", nesting_ok)
                    .with("requested_depth", depth)
                    .with("budget", args.budget);
                return Err(Failure {
                    error: e.into(),
                    code: EXIT_BUDGET,
                    report: Some(partial),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let expected = census::pearl_count(n, depth as u64).map_err(OrbitError::from)?;
    if current.len() as u128 != expected {
        return Err(anyhow!("stage has {} pearls, expected {expected}", current.len()).into());
    }
    write_stage_outputs(args, Exportable::Stage(&current))?;
    let mut report = Report::new()
        .with("n", n)
        .with("depth", depth)
        .with("count", current.len())
        .with("pearls_created", created)
        .with("max_diameter", current.max_diameter())
        .with("nesting_ok", nesting_ok);
    if depth == 0 {
        report.push("necklace", necklace);
    }
    Ok(Outcome {
        report,
        code: if nesting_ok { 0 } else { EXIT_FAILURE },
    })
}

fn orbit_eps(args: &OrbitArgs, necklace: &PearlNecklace, eps: f64) -> CmdResult {
    let cloud = refine(necklace, eps, args.budget)?;
    write_stage_outputs(args, Exportable::Cloud(&cloud))?;
    let mut report = Report::new()
        .with("n", necklace.len())
        .with("eps", eps)
        .with("count", cloud.len())
        .with(
            "exact_points",
            cloud.points.iter().filter(|p| p.exact).count(),
        );
    let mut code = 0;
    if let Some(tol) = args.assert_circle {
        let tol = if tol.is_nan() { 2.0 * eps } else { tol };
        let worst = circle_deviation(&cloud);
        let ok = worst <= tol;
        report.push("circle_deviation", worst);
        report.push("circle_ok", ok);
        if !ok {
            code = EXIT_FAILURE;
        }
    }
    Ok(Outcome { report, code })
}

/// Largest distance from a cloud point to the unit circle in the plane z = 0.
fn circle_deviation(cloud: &PointCloud) -> f64 {
    cloud
        .points
        .iter()
        .map(|p| {
            let q = p.position;
            (q.x.hypot(q.y) - 1.0).hypot(q.z)
        })
        .fold(0.0, f64::max)
}

fn write_stage_outputs(args: &OrbitArgs, item: Exportable<'_>) -> anyhow::Result<()> {
    if let Some(path) = &args.out_json {
        write_output(path, |buf| Ok(export_stage(item, ExportFormat::Json, buf)?))?;
    }
    if let Some(path) = &args.out_ply {
        write_output(path, |buf| Ok(export_stage(item, ExportFormat::Ply, buf)?))?;
    }
    Ok(())
}

pub fn census(args: &CensusArgs) -> CmdResult {
    let count = census::pearl_count(args.n, args.k)?;
    let composition = census::composition(args.n, args.k)?;
    let fiber = census::fiber_stats(args.n, args.k, args.genus, args.boundary)?;
    // u128 counts go out as strings when they do not fit a JSON-safe integer
    let big = |v: u128| -> serde_json::Value {
        match u64::try_from(v) {
            Ok(small) => small.into(),
            Err(_) => v.to_string().into(),
        }
    };
    let euler = match i64::try_from(fiber.euler) {
        Ok(small) => serde_json::Value::from(small),
        Err(_) => fiber.euler.to_string().into(),
    };
    let report = Report::new()
        .with("n", args.n)
        .with("k", args.k)
        .with("pearl_count", big(count))
        .with("direct", big(composition.direct))
        .with("mirror", big(composition.mirror))
        .with("copies", big(composition.total))
        .with("genus", big(fiber.genus))
        .with("euler", euler)
        .with("boundary_punctures", big(fiber.boundary_punctures));
    Ok(report.into())
}

/// Monodromy file: `{"fiber": <presentation>, "monodromy": {"a": <word>, ...}}`.
#[derive(Deserialize)]
struct MonodromyFile {
    fiber: Presentation,
    monodromy: BTreeMap<String, FreeWord>,
}

fn load_monodromy(args: &MonodromyArgs) -> anyhow::Result<(Presentation, Endomorphism)> {
    if args.monodromy == "trefoil" {
        return Ok((algebra::trefoil_fiber(), Endomorphism::trefoil()));
    }
    let path = Path::new(&args.monodromy);
    if !path.exists() {
        bail!(
            "monodromy must be `trefoil` or a JSON file, got `{}`",
            args.monodromy
        );
    }
    let file: MonodromyFile = read_json(path)?;
    let psi = Endomorphism::from_map(file.fiber.generators(), &file.monodromy)?;
    Ok((file.fiber, psi))
}

fn knot_group(args: &MonodromyArgs, copies: Option<u64>) -> anyhow::Result<Presentation> {
    let (fiber, psi) = load_monodromy(args)?;
    Ok(match copies {
        None => semidirect(&fiber, &psi, &args.stable)?,
        Some(m) => truncated_wild_presentation(&fiber, &psi, m as usize, &args.stable)?,
    })
}

pub fn group_present(
    args: &MonodromyArgs,
    copies: Option<u64>,
    target: Option<TargetGroup>,
) -> CmdResult {
    let p = knot_group(args, copies)?;
    let mut report = Report::new()
        .with("presentation", p.to_string())
        .with("generators", p.generators())
        .with("relators", p.relators())
        .with("abelianization", abelianization(&p).to_string());
    if let Some(target) = target {
        report.push("target", target.to_string());
        report.push("homcount", hom_count(&p, target)?);
    }
    Ok(report.into())
}

pub fn group_cover(args: &MonodromyArgs, q: u32) -> CmdResult {
    let (fiber, psi) = load_monodromy(args)?;
    let cover = branched_cover(&fiber, &psi, q, &args.stable)?;
    let from_presentation = abelianization(&fiber_restriction(&cover, &args.stable)?);
    let from_matrix = cover_h1(&psi, q);
    let agree = from_presentation == from_matrix;
    let report = Report::new()
        .with("q", q)
        .with("h1", from_matrix.to_string())
        .with("invariants", &from_matrix)
        .with("presentation_h1", from_presentation.to_string())
        .with("paths_agree", agree)
        .with("cover_presentation", cover.to_string());
    Ok(Outcome {
        report,
        code: if agree { 0 } else { EXIT_FAILURE },
    })
}

pub fn group_homcount(
    args: &MonodromyArgs,
    presentation: Option<&Path>,
    copies: Option<u64>,
    target: TargetGroup,
) -> CmdResult {
    let p = match presentation {
        Some(path) => read_json::<Presentation>(path)?,
        None => knot_group(args, copies)?,
    };
    let report = Report::new()
        .with("presentation", p.to_string())
        .with("target", target.to_string())
        .with("homcount", hom_count(&p, target)?);
    Ok(report.into())
}

pub fn export(args: &ExportArgs) -> CmdResult {
    let text =
        fs::read(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let format = match args.format {
        Format::Json => ExportFormat::Json,
        Format::Ply => ExportFormat::Ply,
    };
    let (kind, count) = if let Ok(stage) = import_stage_json(text.as_slice()) {
        write_output(&args.output, |buf| {
            Ok(export_stage(Exportable::Stage(&stage), format, buf)?)
        })?;
        ("stage", stage.len())
    } else {
        let cloud = import_cloud_json(text.as_slice()).with_context(|| {
            format!(
                "{} is neither a stage nor a point cloud",
                args.input.display()
            )
        })?;
        write_output(&args.output, |buf| {
            Ok(export_stage(Exportable::Cloud(&cloud), format, buf)?)
        })?;
        ("cloud", cloud.len())
    };
    Ok(Report::new().with("kind", kind).with("count", count).into())
}
