use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use collinear::harness::{realize_word, sample_itineraries, SampleReport};
use collinear::manifolds::Manifolds;
use collinear::pullback::{analyze, build_partition, PullbackAnalysis, Quantities, RegionPartition, SeedArcs};
use collinear::symbolic::{
    contains, graph_from_transitions, graph_template, same_language, sample_transitions, GraphBounds, GraphMode, SoficGraph, TheoremCase,
};
use collinear::{Collinear, Error, Flow, Side};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_grid, MassSpec, RunConfig};

/// A failed command with the pipeline stage it failed in.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::InvalidMasses(_) | Error::InvalidConfig(_) | Error::Precondition(_) => 2,
        Error::Heteroclinic { .. }
        | Error::AmbiguousCrossing
        | Error::Tangency { .. }
        | Error::Obstruction { .. }
        | Error::NonManifold { .. }
        | Error::NonTermination { .. } => 4,
        Error::Io(_) => 1,
        _ => 3,
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

trait Staged<T> {
    fn stage(self, stage: &'static str) -> CmdResult<T>;
}

impl<T, E: Into<Error>> Staged<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> CmdResult<T> {
        self.map_err(|e| Failure { stage, error: e.into() })
    }
}

/// Exit status of a command that ran to completion.
pub enum Outcome {
    Ok,
    Inconsistent,
    Counterexamples(usize),
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Ok => 0,
            Outcome::Inconsistent => 3,
            Outcome::Counterexamples(_) => 5,
        }
    }
}

struct Run<'a> {
    config: &'a RunConfig,
    hash: String,
    dir: &'a Path,
}

impl<'a> Run<'a> {
    fn start(config: &'a RunConfig) -> CmdResult<Self> {
        config.validate().stage("config")?;
        let dir = config.out.as_path();
        fs::create_dir_all(dir).stage("output")?;
        let run = Self {
            config,
            hash: config.hash(),
            dir,
        };
        let mut doc = serde_json::to_value(config).stage("output")?;
        doc["config_hash"] = json!(run.hash);
        run.write_json("config.json", &doc)?;
        Ok(run)
    }

    fn write(&self, name: &str, text: &str) -> CmdResult<()> {
        // write-then-rename so readers never see a partial file
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, text).stage("output")?;
        fs::rename(&tmp, self.dir.join(name)).stage("output")
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CmdResult<()> {
        let mut text = serde_json::to_string_pretty(value).stage("output")?;
        text.push('\n');
        self.write(name, &text)
    }

    fn write_dot(&self, name: &str, title: &str, g: &SoficGraph) -> CmdResult<()> {
        self.write(name, &format!("// config {}\n{}", self.hash, g.to_dot(title)))
    }

    fn flow(&self) -> CmdResult<Flow> {
        let masses = self.config.masses.triple().stage("config")?;
        let system = Collinear::new(masses, self.config.energy).stage("config")?;
        Flow::new(system, self.config.flow_config()).stage("dynamics")
    }

    fn analysis(&self, flow: &Flow) -> CmdResult<PullbackAnalysis> {
        analyze(flow, self.config.manifold_config(), self.config.chain_config()).stage("pullback")
    }

    fn header(&self) -> Value {
        json!({
            "config_hash": self.hash,
            "masses": self.config.masses.triple().ok(),
        })
    }
}

fn quantities_doc(run: &Run, q: &Quantities) -> CmdResult<Value> {
    let case = graph_template(q).stage("symbolic")?.case;
    let mut doc = run.header();
    doc["case"] = json!(case.name());
    doc["quantities"] = serde_json::to_value(q).stage("output")?;
    Ok(doc)
}

pub fn cmd_quantities(config: &RunConfig) -> CmdResult<Outcome> {
    let run = Run::start(config)?;
    let flow = run.flow()?;
    let analysis = run.analysis(&flow)?;
    run.write_json("quantities.json", &quantities_doc(&run, &analysis.quantities)?)?;
    Ok(Outcome::Ok)
}

fn graph_entry(g: &SoficGraph) -> Value {
    let s = g.simplify();
    json!({ "raw": g.to_json(), "simplified": s.to_json() })
}

fn emit_bounds(run: &Run, bounds: &GraphBounds) -> CmdResult<Value> {
    let mut graphs = serde_json::Map::new();
    let mut emit = |name: &str, g: &SoficGraph| -> CmdResult<()> {
        run.write_dot(&format!("graph_{name}.dot"), name, g)?;
        run.write_dot(&format!("graph_{name}_simplified.dot"), &format!("{name}_simplified"), &g.simplify())?;
        graphs.insert(name.into(), graph_entry(g));
        Ok(())
    };
    match &bounds.exact {
        Some(exact) => emit("exact", exact)?,
        None => {
            emit("lower", &bounds.lower)?;
            emit("upper", &bounds.upper)?;
        }
    }
    Ok(Value::Object(graphs))
}

/// Compares the partition graphs with the templates. Returns the report
/// and whether the two agree.
fn cross_validate(bounds: &GraphBounds, partition: &RegionPartition, flow: &Flow, run: &Run) -> CmdResult<(Value, bool)> {
    let t = sample_transitions(partition, flow, &run.config.region_sampling()).stage("symbolic")?;
    let mut doc = json!({
        "undetermined": t.undetermined,
        "attempted": t.attempted,
    });
    let ok = match &bounds.exact {
        Some(exact) => {
            let g = graph_from_transitions(partition, &t, GraphMode::Exact).stage("symbolic")?;
            let n = 2 * exact.len();
            let same = same_language(&g, exact, n);
            doc["partition_exact"] = graph_entry(&g);
            doc["same_language_up_to"] = json!(n);
            doc["same_language"] = json!(same);
            same
        }
        None => {
            let g = graph_from_transitions(partition, &t, GraphMode::Upper).stage("symbolic")?;
            let n = 12;
            let within = contains(&bounds.upper, &g, n).stage("symbolic")?;
            let covers = contains(&g, &bounds.lower, n).stage("symbolic")?;
            doc["partition_upper"] = graph_entry(&g);
            doc["partition_within_upper"] = json!(within);
            doc["lower_within_partition"] = json!(covers);
            within.holds
        }
    };
    doc["verdict"] = json!(if ok { "consistent" } else { "inconsistent" });
    Ok((doc, ok))
}

pub fn cmd_graph(config: &RunConfig) -> CmdResult<Outcome> {
    let run = Run::start(config)?;
    let (q, computed) = match &config.quantities {
        Some(q) => (q.clone(), None),
        None => {
            let flow = run.flow()?;
            let analysis = run.analysis(&flow)?;
            (analysis.quantities.clone(), Some((flow, analysis)))
        }
    };
    let bounds = graph_template(&q).stage("symbolic")?;
    let mut doc = quantities_doc(&run, &q)?;
    doc["templates"] = emit_bounds(&run, &bounds)?;
    let mut outcome = Outcome::Ok;
    doc["cross_validation"] = match computed {
        Some((flow, analysis)) => {
            let partition = build_partition(&analysis).stage("pullback")?;
            let (report, ok) = cross_validate(&bounds, &partition, &flow, &run)?;
            if !ok {
                outcome = Outcome::Inconsistent;
            }
            report
        }
        None => json!({ "verdict": "not_computed" }),
    };
    run.write_json("graphs.json", &doc)?;
    Ok(outcome)
}

fn checked_graph(bounds: &GraphBounds) -> (&'static str, &SoficGraph, &SoficGraph) {
    match &bounds.exact {
        Some(g) => ("exact", g, g),
        None => ("upper", &bounds.upper, &bounds.lower),
    }
}

fn realization_summary(flow: &Flow, bounds: &GraphBounds, run: &Run, sample_box: collinear::harness::SampleBox) -> CmdResult<Value> {
    let (_, upper, lower) = checked_graph(bounds);
    let mut found = 0;
    let mut misses = Vec::new();
    for n in 1..=run.config.sampling.realize_max_length {
        for w in lower.words(n) {
            let r = realize_word(flow, &w, upper, sample_box, run.config.shooting_config()).stage("harness")?;
            match r.initial {
                Some(_) if r.verified => found += 1,
                _ => misses.push(json!({ "word": w, "best_prefix": r.best_prefix, "evaluations": r.evaluations })),
            }
        }
    }
    Ok(json!({
        "max_length": run.config.sampling.realize_max_length,
        "realized": found,
        "missed": misses,
    }))
}

fn report_doc(run: &Run, q: &Quantities, case: TheoremCase, graph: &str, report: &SampleReport) -> Value {
    let mut status: BTreeMap<String, usize> = BTreeMap::new();
    for o in &report.orbits {
        let key = match &o.status {
            collinear::harness::OrbitStatus::Failed(_) => "failed".to_string(),
            s => serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        };
        *status.entry(key).or_default() += 1;
    }
    let residual = report.orbits.iter().map(|o| o.energy_residual).fold(0.0, f64::max);
    let mut doc = run.header();
    doc["case"] = json!(case.name());
    doc["quantities"] = json!(q);
    doc["checked_graph"] = json!(graph);
    doc["sampling"] = json!(report.config);
    doc["sample_box"] = json!(report.sample_box);
    doc["acceptance"] = json!(report.acceptance);
    doc["status_counts"] = json!(status);
    doc["max_energy_residual"] = json!(residual);
    doc["counterexamples"] = json!(report.counterexamples.len());
    doc
}

pub fn cmd_validate(config: &RunConfig) -> CmdResult<Outcome> {
    let run = Run::start(config)?;
    let flow = run.flow()?;
    let (q, seeds) = match &config.quantities {
        Some(q) => {
            let mf = Manifolds::new(&flow, config.manifold_config());
            (q.clone(), SeedArcs::compute(&mf).stage("manifolds")?)
        }
        None => {
            let a = run.analysis(&flow)?;
            (a.quantities, a.seeds)
        }
    };
    let bounds = graph_template(&q).stage("symbolic")?;
    let (name, graph, _) = checked_graph(&bounds);
    let sample_box = config.sample_box(&seeds);
    let report = sample_itineraries(&flow, sample_box, &[(name, graph)], config.sampling_config()).stage("harness")?;
    let mut doc = report_doc(&run, &q, bounds.case, name, &report);
    if config.sampling.realize_max_length > 0 {
        doc["realization"] = realization_summary(&flow, &bounds, &run, sample_box)?;
    }
    run.write_json("report.json", &doc)?;
    if report.counterexamples.is_empty() {
        return Ok(Outcome::Ok);
    }
    let mut csv = format!("# config {}\n", run.hash).into_bytes();
    report.write_counterexamples_csv(&mut csv).stage("output")?;
    run.write("counterexamples.csv", &String::from_utf8_lossy(&csv))?;
    Ok(Outcome::Counterexamples(report.counterexamples.len()))
}

fn polyline(points: &[collinear::SectionPoint]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.u1, p.u2]).collect()
}

pub fn cmd_trace(config: &RunConfig) -> CmdResult<Outcome> {
    let run = Run::start(config)?;
    let flow = run.flow()?;
    let analysis = run.analysis(&flow)?;
    let partition = build_partition(&analysis).stage("pullback")?;
    let seeds = &analysis.seeds;

    let mut arcs = Vec::new();
    let mut labeled = BTreeSet::new();
    let mut push = |name: String, arc: &collinear::manifolds::Arc| {
        labeled.insert((arc.side.letter(), arc.start_label.to_string(), arc.start().u1.to_bits(), arc.start().u2.to_bits()));
        labeled.insert((arc.side.letter(), arc.end_label.to_string(), arc.end().u1.to_bits(), arc.end().u2.to_bits()));
        arcs.push(json!({
            "name": name,
            "side": arc.side,
            "start_label": arc.start_label,
            "end_label": arc.end_label,
            "points": polyline(&arc.points),
        }));
    };
    for side in [Side::L, Side::R] {
        push(format!("{}★C", side.letter()), seeds.collision(side));
        push(format!("E{}★", side.letter()), seeds.ejection(side));
    }
    for b in &partition.arcs {
        push(format!("boundary:{}", b.name), &b.arc);
    }
    let labeled: Vec<Value> = labeled
        .into_iter()
        .filter(|(_, label, _, _)| label != "free")
        .map(|(side, label, u1, u2)| json!({ "side": side.to_string(), "label": label, "u1": f64::from_bits(u1), "u2": f64::from_bits(u2) }))
        .collect();
    let mut intersections = serde_json::Map::new();
    for side in [Side::L, Side::R] {
        let pair = format!("{}★C x E{}★", side.letter(), side.letter());
        intersections.insert(pair, json!(seeds.hits(side)));
    }

    let mut doc = run.header();
    doc["quantities"] = json!(analysis.quantities);
    doc["arcs"] = json!(arcs);
    doc["labeled_points"] = json!(labeled);
    doc["intersections"] = Value::Object(intersections);
    doc["regions"] = json!(partition.regions);
    doc["arrangement_faces"] = json!(partition.arrangement_faces);
    run.write_json("arcs.json", &doc)?;
    Ok(Outcome::Ok)
}

pub const SCAN_HEADER: &str = "cell,m1,m2,m3,l_c,r_c,l_cap,r_cap,case,status";

fn scan_row(cell: usize, spec: &MassSpec, config: &RunConfig) -> String {
    let masses = spec.triple().expect("grid validated");
    let mut cell_config = config.clone();
    cell_config.masses = spec.clone();
    let result = (|| -> collinear::Result<Quantities> {
        let flow = Flow::new(Collinear::new(masses, config.energy)?, cell_config.flow_config())?;
        Ok(analyze(&flow, cell_config.manifold_config(), cell_config.chain_config())?.quantities)
    })();
    let [m1, m2, m3] = masses.as_array();
    match result.and_then(|q| graph_template(&q).map(|b| (q, b.case))) {
        Ok((q, case)) => format!("{cell},{m1},{m2},{m3},{},{},{},{},{},ok", q.l_c, q.r_c, q.l_cap, q.r_cap, case.name()),
        Err(e) => {
            let message: String = e.to_string().chars().map(|c| if c == ',' || c == '\n' { ';' } else { c }).collect();
            format!("{cell},{m1},{m2},{m3},,,,,,error {}: {message}", exit_code(&e))
        }
    }
}

/// Rows already on disk. A torn final line (no newline) is cut off.
fn completed_rows(path: &Path, hash: &str) -> CmdResult<BTreeSet<usize>> {
    let mut done = BTreeSet::new();
    if !path.exists() {
        let mut f = File::create(path).stage("output")?;
        write!(f, "# config {hash}\n{SCAN_HEADER}\n").stage("output")?;
        f.sync_all().stage("output")?;
        return Ok(done);
    }
    let text = fs::read_to_string(path).stage("output")?;
    let expected = format!("# config {hash}");
    if text.lines().next() != Some(expected.as_str()) {
        return Err(Failure {
            stage: "config",
            error: Error::InvalidConfig(format!("{} belongs to a different configuration", path.display())),
        });
    }
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    if complete < text.len() {
        OpenOptions::new().write(true).open(path).and_then(|f| f.set_len(complete as u64)).stage("output")?;
    }
    for line in BufReader::new(text[..complete].as_bytes()).lines().skip(2) {
        let line = line.stage("output")?;
        if let Some(cell) = line.split(',').next().and_then(|c| c.parse().ok()) {
            done.insert(cell);
        }
    }
    Ok(done)
}

pub fn cmd_scan(config: &RunConfig) -> CmdResult<Outcome> {
    let grid = config.grid.clone().ok_or_else(|| Failure {
        stage: "config",
        error: Error::InvalidConfig("scan requires --grid".into()),
    })?;
    let run = Run::start(config)?;
    let cells = parse_grid(&grid).stage("config")?;
    let path = run.dir.join("scan.csv");
    let done = completed_rows(&path, &run.hash)?;
    let file = Mutex::new(OpenOptions::new().append(true).open(&path).stage("output")?);
    cells
        .par_iter()
        .enumerate()
        .filter(|(i, _)| !done.contains(i))
        .try_for_each(|(i, spec)| {
            let row = scan_row(i, spec, config) + "\n";
            let mut f = file.lock().expect("scan file lock");
            // one write per row keeps completed rows intact if the run dies
            f.write_all(row.as_bytes()).and_then(|_| f.sync_data()).stage("output")
        })?;
    Ok(Outcome::Ok)
}
