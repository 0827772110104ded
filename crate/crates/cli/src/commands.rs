use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use cms_core::analysis::{classify, closed_subsystems};
use cms_core::coding::{
    coding_map_exact, coding_map_truncated, coding_map_truncated_word, random_periodic_word, EventuallyPeriodicWord,
    SymbolWord,
};
use cms_core::rational::{self, Rational};
use cms_core::refine::{
    build_refinement, coding_commute_check, cylinder_pushforward_check, operator_invariance, parse_cuts,
};
use cms_core::simulation::rng::RngStream;
use cms_core::simulation::{
    default_test_functions, invariance_residual, l_moment_check, occupation_tightness, run, run_replicas,
    run_subshift, EmpiricalMeasure, RunConfig, TightnessReport,
};
use cms_core::thermo::{entropy_rate_oracle, free_energy_residual};
use cms_core::{fixtures, IntervalSystem, System};

use crate::manifest::{replay_path, sha256_hex, OutputHash};
use crate::{CodeArgs, Command, Format, RefineArgs, SimulateArgs, ThermoArgs};

/// A command-line misuse detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Stream used for the tightness run, away from the replica streams.
const TIGHTNESS_STREAM: u64 = 1 << 32;
/// Largest number of base words the refinement pushforward check expands.
const PUSHFORWARD_WORD_CAP: usize = 20_000;

pub struct Ctx {
    pub format: Format,
    pub strict: bool,
    /// Replay mode: outputs go to `<path>.replay`, hashes keyed by the original path.
    pub redirect: bool,
    pub written: Vec<OutputHash>,
}

impl Ctx {
    pub fn new(format: Format, strict: bool, redirect: bool) -> Self {
        Ctx {
            format,
            strict,
            redirect,
            written: Vec::new(),
        }
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let target = if self.redirect { replay_path(path) } else { path.to_path_buf() };
        std::fs::write(&target, bytes).with_context(|| format!("writing {}", target.display()))?;
        self.written.push(OutputHash {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }
}

pub struct SpecInfo {
    pub label: String,
    pub sha256: String,
}

pub struct Outcome {
    pub stdout: String,
    pub exit: u8,
    /// The seed used, and whether it was generated.
    pub seed: Option<(u64, bool)>,
    pub spec: Option<SpecInfo>,
}

pub fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate { .. } => "validate",
        Command::Analyze { .. } => "analyze",
        Command::Subsystems { .. } => "subsystems",
        Command::Simulate(_) => "simulate",
        Command::Code(_) => "code",
        Command::Thermo(_) => "thermo",
        Command::Refine(_) => "refine",
        Command::Replay { .. } => "replay",
    }
}

/// A file path, or `fixture:NAME` for a bundled example.
pub fn read_document(spec: &str) -> Result<String> {
    if let Some(name) = spec.strip_prefix("fixture:") {
        return match fixtures::document(name) {
            Some(doc) => Ok(doc.to_string()),
            None => bail!(UsageError(format!("unknown fixture {name:?}"))),
        };
    }
    std::fs::read_to_string(spec).with_context(|| format!("reading {spec}"))
}

fn load(spec: &str) -> Result<(System, SpecInfo)> {
    let doc = read_document(spec)?;
    let info = SpecInfo {
        label: spec.to_string(),
        sha256: sha256_hex(doc.as_bytes()),
    };
    Ok((cms_core::load(&doc)?, info))
}

fn interval<'a>(system: &'a System, command: &str) -> Result<&'a IntervalSystem> {
    match system {
        System::Interval(s) => Ok(s),
        System::Subshift(_) => bail!(cms_core::Error::NotApplicable(format!(
            "{command} needs an interval system"
        ))),
    }
}

fn resolve_seed(seed: Option<u64>) -> (u64, bool) {
    match seed {
        Some(s) => (s, false),
        None => {
            let nanos = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0);
            // splitmix64 finalizer, so nearby clocks give unrelated seeds
            let mut z = nanos ^ ((std::process::id() as u64) << 32);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            let s = z ^ (z >> 31);
            eprintln!("seed: {s} (generated; pass --seed {s} to repeat)");
            (s, true)
        }
    }
}

fn render(format: Format, value: &Value, text: String) -> Result<String> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(value)? + "\n",
        Format::Text => text,
    })
}

fn done(stdout: String, spec: SpecInfo, seed: Option<(u64, bool)>) -> Outcome {
    Outcome {
        stdout,
        exit: 0,
        seed,
        spec: Some(spec),
    }
}

pub fn dispatch(ctx: &mut Ctx, command: &Command) -> Result<Outcome> {
    match command {
        Command::Validate { spec } => validate(ctx, spec),
        Command::Analyze { spec, n_max } => analyze(ctx, spec, *n_max),
        Command::Subsystems { spec } => subsystems(ctx, spec),
        Command::Simulate(a) => simulate(ctx, a),
        Command::Code(a) => code(ctx, a),
        Command::Thermo(a) => thermo(ctx, a),
        Command::Refine(a) => refine(ctx, a),
        Command::Replay { .. } => bail!(UsageError("replay is handled by main".into())),
    }
}

fn validate(ctx: &mut Ctx, spec: &str) -> Result<Outcome> {
    let (system, info) = load(spec)?;
    let backend = match system {
        System::Interval(_) => "interval",
        System::Subshift(_) => "subshift",
    };
    let value = json!({
        "valid": true,
        "backend": backend,
        "atoms": system.atom_count(),
        "edges": system.edge_count(),
    });
    let text = format!(
        "valid {backend} system: {} atoms, {} edges\n",
        system.atom_count(),
        system.edge_count()
    );
    Ok(done(render(ctx.format, &value, text)?, info, None))
}

fn analyze(ctx: &mut Ctx, spec: &str, n_max: Option<usize>) -> Result<Outcome> {
    let (system, info) = load(spec)?;
    let report = classify(&system, n_max);
    let stdout = render(ctx.format, &report.to_json(), report.to_text())?;
    let mut out = done(stdout, info, None);
    if ctx.strict && report.is_undecided() {
        out.exit = 2;
    }
    Ok(out)
}

fn subsystems(ctx: &mut Ctx, spec: &str) -> Result<Outcome> {
    let (system, info) = load(spec)?;
    let subs = closed_subsystems(&system);
    let value = json!(subs
        .iter()
        .map(|s| json!({"atoms": s.atoms, "closed_in_k": s.closed_in_k}))
        .collect::<Vec<_>>());
    let mut text = String::new();
    for s in &subs {
        let ids: Vec<String> = s.atoms.iter().map(u64::to_string).collect();
        let closed = if s.closed_in_k { "closed in K" } else { "not closed in K" };
        let _ = writeln!(text, "{{{}}} ({closed})", ids.join(", "));
    }
    Ok(done(render(ctx.format, &value, text)?, info, None))
}

fn parse_windows(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| UsageError(format!("bad window {s:?}")).into())
        })
        .collect()
}

/// `hist.csv` → `hist.moments.csv`.
fn moments_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.moments.csv"))
}

fn histogram_csv(m: &EmpiricalMeasure) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["atom_id", "count", "frequency"])?;
    for ((id, count), freq) in m.atom_ids.iter().zip(&m.counts).zip(m.frequencies()) {
        w.write_record([id.to_string(), count.to_string(), freq.to_string()])?;
    }
    Ok(w.into_inner()?)
}

fn moments_csv(rows: &[(String, f64)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "value"])?;
    for (k, v) in rows {
        w.write_record([k.clone(), v.to_string()])?;
    }
    Ok(w.into_inner()?)
}

fn tightness_json(t: &TightnessReport) -> Value {
    json!({
        "verdict": t.verdict.to_string(),
        "epsilon": t.epsilon,
        "radius": t.radius,
        "profile": t.profile.iter().map(|p| json!({
            "n": p.n, "k": p.k, "tail": p.tail, "radial_tail": p.radial_tail,
        })).collect::<Vec<_>>(),
        "doubling_gaps": t.doubling_gaps,
    })
}

fn simulate(ctx: &mut Ctx, a: &SimulateArgs) -> Result<Outcome> {
    let (system, info) = load(&a.spec)?;
    let (seed, generated) = resolve_seed(a.seed);
    let config = RunConfig {
        steps: a.steps,
        burn_in: a.burn.unwrap_or(a.steps / 10),
        reservoir: a.reservoir,
        keep_trajectory: false,
    };
    let pool = match a.threads {
        Some(t) => Some(rayon::ThreadPoolBuilder::new().num_threads(t).build()?),
        None => None,
    };
    let mut rows: Vec<(String, f64)> = Vec::new();
    let mut extra = serde_json::Map::new();
    let mut text = String::new();
    let (x0, measure) = match &system {
        System::Interval(s) => {
            let x0 = a
                .x0
                .unwrap_or_else(|| rational::to_f64(&s.anchors[s.atoms_in_order()[0]]));
            let go = || run_replicas(s, x0, &config, seed, a.replicas);
            let m = match &pool {
                Some(p) => p.install(go)?,
                None => go()?,
            };
            (x0, m)
        }
        System::Subshift(s) => {
            let id = a.x0.unwrap_or(s.vertices[0] as f64);
            let v = s
                .vertex_index(id as u64)
                .filter(|_| id.fract() == 0.0 && id >= 0.0)
                .ok_or(cms_core::Error::UnknownAtom(id as u64))?;
            let mut acc: Option<EmpiricalMeasure> = None;
            for r in 0..a.replicas.max(1) as u64 {
                let (_, m) = run_subshift(s, v, &config, &mut RngStream::new(seed, r))?;
                match acc.as_mut() {
                    Some(acc) => acc.merge(&m),
                    None => acc = Some(m),
                }
            }
            (id, acc.expect("at least one replica"))
        }
    };
    let _ = writeln!(text, "seed: {seed}");
    let _ = writeln!(
        text,
        "steps: {} (burn-in {}, replicas {}), x0 = {x0}",
        config.steps,
        config.burn_in,
        a.replicas.max(1)
    );
    rows.push(("samples".into(), measure.total as f64));
    if let System::Interval(s) = &system {
        rows.push(("mean".into(), measure.mean()));
        rows.push(("second_moment".into(), measure.second_moment()));
        rows.push(("variance".into(), measure.variance()));
        let _ = writeln!(text, "mean = {}", measure.mean());
        let _ = writeln!(text, "second moment = {}", measure.second_moment());
        let _ = writeln!(text, "variance = {}", measure.variance());
        if !measure.reservoir.is_empty() {
            let residuals = invariance_residual(s, &measure, &default_test_functions(s))?;
            let _ = writeln!(text, "invariance residuals:");
            for (name, r) in &residuals {
                let _ = writeln!(text, "  {name}: {r}");
                rows.push((format!("residual:{name}"), *r));
            }
            let l = l_moment_check(s, &measure)?;
            let _ = writeln!(
                text,
                "integral of L = {} (se {}), bound b/(1-a) = {}: {}",
                l.integral,
                l.se,
                l.bound,
                if l.pass { "pass" } else { "fail" }
            );
            rows.push(("l_integral".into(), l.integral));
            rows.push(("l_se".into(), l.se));
            rows.push(("l_bound".into(), l.bound));
            extra.insert(
                "residuals".into(),
                Value::Object(residuals.iter().map(|(k, v)| (k.clone(), json!(v))).collect()),
            );
            extra.insert(
                "l_moment".into(),
                json!({"integral": l.integral, "se": l.se, "bound": l.bound, "pass": l.pass}),
            );
        }
        if let Some(w) = &a.windows {
            let windows = parse_windows(w)?;
            let t = occupation_tightness(s, x0, &windows, a.epsilon, &mut RngStream::new(seed, TIGHTNESS_STREAM))?;
            let _ = writeln!(text, "tightness: {}", t.verdict);
            for p in &t.profile {
                let _ = writeln!(
                    text,
                    "  n = {}: k = {}, tail = {}, radial tail = {}",
                    p.n, p.k, p.tail, p.radial_tail
                );
            }
            extra.insert("tightness".into(), tightness_json(&t));
        }
    }
    let _ = writeln!(text, "occupation:");
    for ((id, c), f) in measure.atom_ids.iter().zip(&measure.counts).zip(measure.frequencies()) {
        let _ = writeln!(text, "  atom {id}: count {c}, frequency {f}");
    }
    if let Some(out) = &a.out {
        ctx.write(out, &histogram_csv(&measure)?)?;
        ctx.write(&moments_path(out), &moments_csv(&rows)?)?;
    }
    let mut value = json!({
        "seed": seed,
        "steps": config.steps,
        "burn_in": config.burn_in,
        "replicas": a.replicas.max(1),
        "x0": x0,
        "samples": measure.total,
        "occupation": measure.atom_ids.iter().zip(&measure.counts).zip(measure.frequencies())
            .map(|((id, c), f)| json!({"atom_id": id, "count": c, "frequency": f}))
            .collect::<Vec<_>>(),
    });
    if matches!(system, System::Interval(_)) {
        value["mean"] = json!(measure.mean());
        value["second_moment"] = json!(measure.second_moment());
        value["variance"] = json!(measure.variance());
    }
    for (k, v) in extra {
        value[k] = v;
    }
    Ok(done(render(ctx.format, &value, text)?, info, Some((seed, generated))))
}

fn code(ctx: &mut Ctx, a: &CodeArgs) -> Result<Outcome> {
    let (system, info) = load(&a.spec)?;
    let s = interval(&system, "code")?;
    let word = if a.word.trim().is_empty() {
        SymbolWord::default()
    } else {
        SymbolWord::parse(s, &a.word)?
    };
    let period = a.period.as_deref().map(|p| SymbolWord::parse(s, p)).transpose()?;
    let newest = word
        .symbols
        .last()
        .or_else(|| period.as_ref().and_then(|p| p.symbols.last()))
        .copied()
        .ok_or_else(|| UsageError("give --word, --period or both".into()))?;
    let (value, bound) = if a.exact {
        let period = period.ok_or_else(|| UsageError("--exact needs --period".into()))?;
        let w = EventuallyPeriodicWord::new(s, word, period)?;
        (coding_map_exact(s, &w)?, None)
    } else {
        let depth = a.depth.expect("clap requires --exact or --depth");
        let t = match period {
            Some(period) => {
                let w = EventuallyPeriodicWord::new(s, word, period)?;
                coding_map_truncated_word(s, &w, depth)?
            }
            None => {
                if word.len() < depth + 1 {
                    bail!(UsageError(format!(
                        "--depth {depth} needs {} symbols or a --period",
                        depth + 1
                    )));
                }
                let n = word.len();
                coding_map_truncated(s, depth, &mut |k| word.symbols.get(n - 1 - k).copied())?
            }
        };
        (t.estimate, Some(t.error_bound))
    };
    let landed = s.atom_id_of(&value);
    let target = s.atoms[s.edges[newest].target].id;
    let mut text = format!(
        "F = {value} (≈ {})\nlands in atom {} (target of σ0: atom {target})\n",
        rational::to_f64(&value),
        landed.map_or("none".to_string(), |id| id.to_string()),
    );
    if let Some(b) = bound {
        let _ = writeln!(text, "error bound = {b} (valid on the good sets of the Hölder estimate)");
    }
    let json = json!({
        "value": value.to_string(),
        "value_f64": rational::to_f64(&value),
        "atom": landed,
        "target_atom": target,
        "mode": if a.exact { "exact" } else { "truncated" },
        "error_bound": bound,
    });
    Ok(done(render(ctx.format, &json, text)?, info, None))
}

fn thermo(ctx: &mut Ctx, a: &ThermoArgs) -> Result<Outcome> {
    let (system, info) = load(&a.spec)?;
    let (seed, generated) = resolve_seed(a.seed);
    let burn = a.burn.unwrap_or(a.steps / 10);
    if a.steps <= burn {
        bail!(cms_core::Error::NoSamples);
    }
    let config = RunConfig {
        steps: a.steps,
        burn_in: 0,
        reservoir: 0,
        keep_trajectory: true,
    };
    let mut rng = RngStream::new(seed, 0);
    let (traj, exact_rate) = match &system {
        System::Interval(s) => {
            let x0 = a
                .x0
                .unwrap_or_else(|| rational::to_f64(&s.anchors[s.atoms_in_order()[0]]));
            (run(s, x0, &config, &mut rng)?.0, None)
        }
        System::Subshift(s) => {
            let id = a.x0.unwrap_or(s.vertices[0] as f64);
            let v = s
                .vertex_index(id as u64)
                .ok_or(cms_core::Error::UnknownAtom(id as u64))?;
            let rate = if s.memory == 1 { entropy_rate_oracle(s).ok() } else { None };
            (run_subshift(s, v, &config, &mut rng)?.0, rate)
        }
    };
    let fe = free_energy_residual(&traj.tail(burn as usize), a.memory)?;
    let value = json!({
        "seed": seed,
        "memory": fe.memory,
        "H_m": fe.entropy.h,
        "H_m_se": fe.entropy.se,
        "contexts": fe.entropy.contexts,
        "adequate_sample": fe.entropy.adequate,
        "u_avg": fe.energy.value,
        "residual": fe.residual,
        "se": fe.se,
        "entropy_possibly_infinite": fe.entropy_possibly_infinite,
        "verdict": fe.verdict,
        "entropy_rate_exact": exact_rate,
    });
    let mut text = String::new();
    let _ = writeln!(text, "seed: {seed}");
    let _ = writeln!(text, "H_{} = {} nats (se {})", fe.memory, fe.entropy.h, fe.entropy.se);
    let _ = writeln!(text, "u_avg = {}", fe.energy.value);
    let _ = writeln!(text, "residual = {} (se {})", fe.residual, fe.se);
    if let Some(r) = exact_rate {
        let _ = writeln!(text, "exact entropy rate = {r}");
    }
    if !fe.entropy.adequate {
        let _ = writeln!(text, "warning: few samples per context at this memory");
    }
    let _ = writeln!(text, "verdict: {}", fe.verdict);
    if let Some(out) = &a.out {
        ctx.write(out, (serde_json::to_string_pretty(&value)? + "\n").as_bytes())?;
    }
    Ok(done(render(ctx.format, &value, text)?, info, Some((seed, generated))))
}

/// Base edge sequences of length `1..=depth` (all of them, paths or not).
fn base_words(edges: usize, depth: usize) -> Vec<SymbolWord> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..depth {
        if out.len() + layer.len() * edges > PUSHFORWARD_WORD_CAP {
            break;
        }
        layer = layer
            .iter()
            .flat_map(|w| {
                (0..edges).map(move |e| {
                    let mut v = w.clone();
                    v.push(e);
                    v
                })
            })
            .collect();
        out.extend(layer.iter().cloned().map(SymbolWord::new));
    }
    out
}

fn refine(ctx: &mut Ctx, a: &RefineArgs) -> Result<Outcome> {
    let (system, info) = load(&a.spec)?;
    let s = interval(&system, "refine")?;
    let cuts = parse_cuts(&a.cuts)?;
    let (seed, generated) = resolve_seed(a.seed);
    let r = build_refinement(s, &cuts)?;
    let structure = r.structure();

    let mut points: Vec<Rational> = s.anchors.clone();
    points.extend(r.refined.anchors.iter().cloned());
    for atom in &r.refined.atoms {
        points.extend(atom.set.closure_endpoints().into_iter().filter(|z| s.atom_of(z).is_some()));
    }
    points.sort();
    points.dedup();

    let words = base_words(s.edges.len(), a.depth);
    let mut push_checked = 0usize;
    let mut push_failures = Vec::new();
    for x in &s.anchors {
        for w in &words {
            let c = cylinder_pushforward_check(&r, x, w)?;
            push_checked += 1;
            if !c.equal {
                push_failures.push(json!({"x": x.to_string(), "word": w.ids(s), "lhs": c.lhs.to_string(), "rhs": c.rhs.to_string()}));
            }
        }
    }

    let mut rng = RngStream::new(seed, 0);
    let sampled: Vec<EventuallyPeriodicWord> = (0..a.words)
        .filter_map(|_| random_periodic_word(&r.refined, 5, 4, &mut rng))
        .collect();
    let commute = coding_commute_check(&r, &sampled)?;
    let u_failures: Vec<String> = points
        .iter()
        .filter(|x| !operator_invariance(&r, x))
        .map(|x| x.to_string())
        .collect();

    let mut spec_json = serde_json::to_value(r.refined.to_spec())?;
    spec_json["backend"] = json!("interval");
    let ok = structure.ok() && push_failures.is_empty() && commute.all_equal && u_failures.is_empty();
    let verification = json!({
        "ok": ok,
        "surjective": structure.surjective,
        "partition": structure.partition,
        "restriction": structure.restriction,
        "r": r.r.iter().enumerate().map(|(k, &e)| json!([r.refined.edges[k].id, s.edges[e].id])).collect::<Vec<_>>(),
        "pushforward": {"checked": push_checked, "failures": push_failures},
        "coding_commute": {"checked": commute.entries.len(), "all_equal": commute.all_equal},
        "operator_invariance": {"points": points.len(), "failures": u_failures},
        "seed": seed,
    });
    if let Some(out) = &a.out {
        ctx.write(out, (serde_json::to_string_pretty(&spec_json)? + "\n").as_bytes())?;
    }
    let mut text = String::new();
    let _ = writeln!(
        text,
        "refined: {} atoms, {} edges (base {} / {})",
        r.refined.atoms.len(),
        r.refined.edges.len(),
        s.atoms.len(),
        s.edges.len()
    );
    let mapping: Vec<String> = r
        .r
        .iter()
        .enumerate()
        .map(|(k, &e)| format!("{} -> {}", r.refined.edges[k].id, s.edges[e].id))
        .collect();
    let _ = writeln!(text, "r: {}", mapping.join(", "));
    let _ = writeln!(
        text,
        "structure: surjective {}, partition {}, restriction {}",
        structure.surjective, structure.partition, structure.restriction
    );
    let _ = writeln!(
        text,
        "cylinder pushforward: {} checks, {} failures",
        push_checked,
        verification["pushforward"]["failures"].as_array().map_or(0, Vec::len)
    );
    let _ = writeln!(
        text,
        "coding maps commute: {} of {} words",
        commute.entries.iter().filter(|e| e.equal).count(),
        commute.entries.len()
    );
    let _ = writeln!(
        text,
        "operator invariance: {} points, {} failures",
        points.len(),
        verification["operator_invariance"]["failures"].as_array().map_or(0, Vec::len)
    );
    let _ = writeln!(text, "verification: {}", if ok { "ok" } else { "FAILED" });
    let _ = writeln!(text, "{}", serde_json::to_string_pretty(&spec_json)?);
    let value = json!({"refined": spec_json, "verification": verification});
    let mut outcome = done(render(ctx.format, &value, text)?, info, Some((seed, generated)));
    if !ok {
        outcome.exit = 4;
    }
    Ok(outcome)
}
