//! A small synthetic catalog for demos and end-to-end checks.
//!
//! Courses fall into eight topic clusters whose descriptions share a cluster
//! vocabulary. Student statements describe the same interests in a separate
//! vocabulary, so matching them to courses has to be learned from the liked
//! labels rather than read off shared words.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde_json::json;

use crate::augment::SynonymLexicon;
use crate::catalog::{parse_courses, parse_statements, split_statements, CatalogOptions, CourseRecord, StatementRecord};
use crate::embed::EmbeddingSource;
use crate::error::Result;
use crate::eval::{evaluate_model, MetricsReport};
use crate::seed::{derive_seed, rng_from_seed};
use crate::train::{initial_weights, train, TrainOutcome, TrainingConfig};

struct Cluster {
    faculty: &'static str,
    name: &'static str,
    topic: [&'static str; 8],
    interest: [&'static str; 6],
    specific: [&'static str; 10],
}

const CLUSTERS: [Cluster; 8] = [
    Cluster {
        faculty: "ELG",
        name: "Power",
        topic: ["voltage", "transformer", "generator", "grid", "transmission", "converter", "inverter", "load"],
        interest: ["electricity", "outlets", "blackout", "batteries", "solar", "wiring"],
        specific: ["harmonics", "relaying", "busbar", "phasor", "switchgear", "tariffs", "excitation", "dispatch", "feeders", "insulators"],
    },
    Cluster {
        faculty: "SEG",
        name: "Software",
        topic: ["software", "requirements", "testing", "architecture", "modules", "refactoring", "versioning", "deployment"],
        interest: ["apps", "coding", "websites", "programs", "startups", "bugs"],
        specific: ["microservices", "agile", "scrum", "containers", "linting", "mocking", "pipelines", "patterns", "reviews", "sprints"],
    },
    Cluster {
        faculty: "CVG",
        name: "Structures",
        topic: ["beams", "columns", "concrete", "steel", "trusses", "foundations", "loads", "deflection"],
        interest: ["bridges", "skyscrapers", "buildings", "towers", "earthquakes", "construction"],
        specific: ["rebar", "prestressing", "footings", "girders", "slabs", "shear", "buckling", "welds", "piles", "formwork"],
    },
    Cluster {
        faculty: "MCG",
        name: "Fluids",
        topic: ["fluid", "viscosity", "pressure", "turbulence", "pipes", "pumps", "boundary", "flow"],
        interest: ["rivers", "airplanes", "weather", "plumbing", "wind", "oceans"],
        specific: ["bernoulli", "nozzles", "vortices", "drag", "cavitation", "manometers", "diffusers", "wakes", "jets", "compressible"],
    },
    Cluster {
        faculty: "ELG",
        name: "Signals",
        topic: ["signals", "filters", "sampling", "spectrum", "fourier", "modulation", "noise", "convolution"],
        interest: ["music", "radio", "phones", "audio", "podcasts", "speakers"],
        specific: ["aliasing", "wavelets", "decimation", "equalizers", "transforms", "quantization", "windows", "impulse", "bandwidth", "codecs"],
    },
    Cluster {
        faculty: "MCG",
        name: "Materials",
        topic: ["materials", "alloys", "polymers", "ceramics", "fatigue", "fracture", "hardness", "crystals"],
        interest: ["metals", "plastics", "glass", "smartphones", "recycling", "textiles"],
        specific: ["annealing", "dislocations", "composites", "corrosion", "grains", "creep", "toughness", "sintering", "phases", "coatings"],
    },
    Cluster {
        faculty: "MCG",
        name: "Robotics",
        topic: ["robots", "kinematics", "actuators", "sensors", "manipulators", "trajectories", "controllers", "servos"],
        interest: ["drones", "automation", "factories", "gadgets", "arduino", "toys"],
        specific: ["grippers", "odometry", "encoders", "localization", "joints", "torque", "path", "lidar", "feedback", "end-effectors"],
    },
    Cluster {
        faculty: "CHG",
        name: "Chemistry",
        topic: ["reactions", "reactors", "kinetics", "catalysts", "distillation", "separation", "thermodynamics", "equilibrium"],
        interest: ["medicine", "cooking", "refineries", "pharmaceuticals", "perfume", "brewing"],
        specific: ["absorption", "extraction", "stoichiometry", "yield", "enthalpy", "membranes", "evaporators", "crystallizers", "scaleup", "batch"],
    },
];

const GENERIC: [&str; 10] =
    ["introduction", "principles", "analysis", "design", "methods", "applications", "fundamentals", "topics", "systems", "theory"];

/// Administrative boilerplate. Each course carries a random amount of it, so
/// the untrained pooled vectors vary most along directions that say nothing
/// about the topic.
const BOILERPLATE: &str = "this course is offered every term";

const MAX_BOILERPLATE: usize = 8;

const OPENERS: [&str; 5] = [
    "i want to learn about",
    "i am curious about",
    "i would love to study",
    "i enjoy thinking about",
    "my goal is to understand",
];

pub const COURSES_PER_CLUSTER: usize = 5;
pub const NUM_CLUSTERS: usize = CLUSTERS.len();

/// Raw catalog and statement JSON lines plus the cluster of every course.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub courses_jsonl: String,
    pub statements_jsonl: String,
    /// `(course key, cluster name)` in catalog order.
    pub groups: Vec<(String, String)>,
}

impl SyntheticData {
    /// Writes `courses.jsonl` and `statements.jsonl` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("courses.jsonl"), &self.courses_jsonl)?;
        fs::write(dir.join("statements.jsonl"), &self.statements_jsonl)?;
        Ok(())
    }

    pub fn group_of(&self, key: &str) -> Option<&str> {
        self.groups.iter().find(|(k, _)| k == key).map(|(_, g)| g.as_str())
    }
}

/// 40 courses in 8 clusters and `num_statements` statements, each liking two
/// courses of one cluster.
pub fn generate(num_statements: usize, seed: u64) -> SyntheticData {
    let mut courses_jsonl = String::new();
    let mut groups = Vec::new();
    let mut keys_by_cluster = Vec::new();
    let mut rng = rng_from_seed(derive_seed(seed, "synthetic-courses", 0));

    for (c, cluster) in CLUSTERS.iter().enumerate() {
        let mut keys = Vec::new();
        for i in 0..COURSES_PER_CLUSTER {
            let code = format!("{}{}{:02}", 2 + i % 3, c, i * 7 % 100);
            let key = format!("{} {code}", cluster.faculty);
            let mut words: Vec<&str> = cluster.topic.choose_multiple(&mut rng, 6).copied().collect();
            words.extend(&cluster.specific[2 * i..2 * i + 2]);
            words.extend(GENERIC.choose_multiple(&mut rng, 3));
            words.shuffle(&mut rng);
            let title = format!("{} {}", cluster.name, capitalize(cluster.specific[2 * i]));
            let filler = vec![BOILERPLATE; rng.random_range(0..=MAX_BOILERPLATE)];
            let description = format!(
                "{}. Students study {} in depth. {}",
                capitalize(&words.join(" ")),
                cluster.specific[2 * i + 1],
                filler.join(". ")
            );
            let line = json!({
                "faculty": cluster.faculty,
                "code": code,
                "title": title,
                "description": description,
                "components": "Lecture",
                "prerequisites": "",
                "language": "english",
            });
            writeln!(courses_jsonl, "{line}").unwrap();
            groups.push((key.clone(), cluster.name.to_string()));
            keys.push(key);
        }
        keys_by_cluster.push(keys);
    }

    let mut statements_jsonl = String::new();
    let mut rng = rng_from_seed(derive_seed(seed, "synthetic-statements", 0));
    for s in 0..num_statements {
        let c = s % CLUSTERS.len();
        let cluster = &CLUSTERS[c];
        let interests: Vec<&str> = cluster.interest.choose_multiple(&mut rng, 3).copied().collect();
        let opener = OPENERS[rng.random_range(0..OPENERS.len())];
        let text = format!("{opener} {} and {}, especially {}.", interests[0], interests[1], interests[2]);
        let liked: Vec<&String> = keys_by_cluster[c].choose_multiple(&mut rng, 2).collect();
        let line = json!({ "id": format!("s{s:03}"), "text": text, "liked": liked });
        writeln!(statements_jsonl, "{line}").unwrap();
    }

    SyntheticData { courses_jsonl, statements_jsonl, groups }
}

/// Encoder width of the desk experiment.
pub const DESK_WIDTH: usize = 32;
/// Seed of the desk experiment.
pub const DESK_SEED: u64 = 8;

/// Training settings for the desk experiment: a 32-wide stub encoder, a
/// 64-unit hidden layer and 16 output dimensions.
pub fn desk_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        lr_max: 3e-3,
        batch_size: 4,
        epochs: 20,
        hidden_dim: Some(64),
        out_dim: 16,
        view_bank_size: 2,
        seed,
        ..TrainingConfig::default()
    }
}

/// Synthetic catalog, split and stub encoder for one desk run.
pub struct DeskSetup {
    pub data: SyntheticData,
    pub courses: Vec<CourseRecord>,
    pub train: Vec<StatementRecord>,
    pub test: Vec<StatementRecord>,
    pub source: EmbeddingSource,
}

impl DeskSetup {
    /// 60 statements split 80/20, everything derived from `seed`.
    pub fn new(seed: u64) -> Result<Self> {
        let data = generate(60, seed);
        let courses = parse_courses(data.courses_jsonl.as_bytes(), &CatalogOptions::default())?;
        let known: BTreeSet<_> = courses.iter().map(CourseRecord::key).collect();
        let statements = parse_statements(data.statements_jsonl.as_bytes(), &known)?.records;
        let split = split_statements(&statements, seed, 0.8)?;
        Ok(Self { data, courses, train: split.train, test: split.test, source: EmbeddingSource::stub(DESK_WIDTH, seed) })
    }
}

/// Metrics of the untrained and trained heads on the held-out statements.
pub struct DeskRun {
    pub untrained: MetricsReport,
    pub trained: MetricsReport,
    pub outcome: TrainOutcome,
}

/// Trains on `setup` with `config` and scores both heads at top 5.
pub fn desk_run(setup: &DeskSetup, config: &TrainingConfig) -> Result<DeskRun> {
    let initial = initial_weights(config, setup.source.width())?;
    let untrained = evaluate_model(&setup.courses, &setup.test, &setup.source, &initial, 5)?;
    let outcome = train(&setup.courses, &setup.train, &setup.source, &SynonymLexicon::builtin(), config)?;
    let trained = evaluate_model(&setup.courses, &setup.test, &setup.source, &outcome.weights, 5)?;
    Ok(DeskRun { untrained, trained, outcome })
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    chars.next().map(|f| f.to_uppercase().chain(chars).collect()).unwrap_or_default()
}
