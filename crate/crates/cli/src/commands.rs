use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use fakewake::distance::word_dist;
use fakewake::evolve::{self, EvolveError, FuzzyArchive};
use fakewake::explain::{explain_archive, ExplainError};
use fakewake::mitigate::{run_mitigation, screening_report, MitigateError};
use fakewake::oracle::{ExternalOracle, OracleSpec, SimulatedDetector, WakeOracle};
use fakewake::phonetics::DATA_DIR_ENV;
use fakewake::{Exec, Language, Resources, Word};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

impl From<EvolveError> for CliError {
    fn from(e: EvolveError) -> Self {
        match e {
            EvolveError::Oracle(err, _) => CliError::Oracle(err.to_string()),
            EvolveError::InvalidConfig(_) | EvolveError::Distance(_) => config_err(e),
            other => failed(other),
        }
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::InvalidConfig(_) => config_err(e),
            other => failed(other),
        }
    }
}

impl From<MitigateError> for CliError {
    fn from(e: MitigateError) -> Self {
        match e {
            MitigateError::InvalidConfig(_) => config_err(e),
            MitigateError::Explain(x) => x.into(),
            MitigateError::Evolve(x) => x.into(),
            other => failed(other),
        }
    }
}

fn resources() -> Result<Resources, CliError> {
    Resources::from_env().map_err(|e| CliError::Config(format!("loading phonetic data: {e}")))
}

/// Parses `text`, reporting every offending syllable for Mandarin.
fn parse_word(lang: Language, text: &str, res: &Resources) -> Result<Word, CliError> {
    Word::parse(lang, text, res).map_err(|e| {
        let bad: Vec<String> = match lang {
            Language::Zh => text
                .split_whitespace()
                .filter_map(|tok| res.pinyin.parse_syllable(tok).err().map(|err| format!("\n  {tok}: {err}")))
                .collect(),
            Language::En => Vec::new(),
        };
        if bad.is_empty() {
            CliError::Config(format!("invalid {lang} word {text:?}: {e}"))
        } else {
            CliError::Config(format!("invalid {lang} word {text:?}:{}", bad.concat()))
        }
    })
}

fn exec_for(cfg: &RunConfig) -> Result<Exec, CliError> {
    match cfg.threads {
        Some(0) => Err(config_err("threads must be positive")),
        Some(1) => Ok(Exec::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            {
                // a second call in the same process keeps the first pool
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            let _ = n;
            Ok(Exec::Parallel)
        }
        None => Ok(Exec::Parallel),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| failed(format!("writing {}: {e}", path.display())))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| failed(format!("creating {}: {e}", cfg.out.display())))?;
    Ok(&cfg.out)
}

fn load_archive(path: &Path) -> Result<(FuzzyArchive, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read archive {}: {e}", path.display())))?;
    let archive = FuzzyArchive::from_json(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    Ok((archive, format!("{:016x}", fnv1a(text.as_bytes()))))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Serialize)]
struct Input {
    path: PathBuf,
    fnv1a: String,
}

/// Everything needed to rerun a command bit-exactly.
#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    data_dir: Option<String>,
    input: Option<Input>,
    oracle: Option<String>,
    queries: Option<u64>,
    files: Vec<&'static str>,
    config: &'a RunConfig,
}

impl<'a> Manifest<'a> {
    fn new(command: &'static str, seed: u64, config: &'a RunConfig) -> Self {
        Self {
            tool: "fakewake",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            data_dir: std::env::var(DATA_DIR_ENV).ok(),
            input: None,
            oracle: None,
            queries: None,
            files: Vec::new(),
            config,
        }
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        write(&dir.join("manifest.json"), serde_json::to_string_pretty(self).expect("manifest serializes") + "\n")
    }
}

fn search_with<O: WakeOracle + ?Sized>(
    wake: &Word,
    oracle: &O,
    cfg: &RunConfig,
    seed: u64,
    res: &Resources,
    exec: Exec,
) -> Result<FuzzyArchive, EvolveError> {
    evolve::run(wake, oracle, &cfg.search(), seed, res, exec)
}

pub fn summary_tsv(archive: &FuzzyArchive) -> String {
    let mut s = String::from("word\twake_rate\tbucket\tdissimilarity\n");
    for c in archive.by_dissimilarity() {
        let bucket = evolve::bucket(c.wake_rate).map_or_else(|_| "-".to_string(), |b| format!("{b:?}").to_lowercase());
        let _ = writeln!(s, "{}\t{}\t{bucket}\t{}", c.word, c.wake_rate, c.dissimilarity);
    }
    s
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.require_seed()?;
    cfg.search().validate()?;
    let res = resources()?;
    let wake = parse_word(cfg.language, &cfg.wake_word, &res)?;
    let exec = exec_for(cfg)?;
    let dir = out_dir(cfg)?;

    let result = match &cfg.oracle {
        OracleSpec::Sim => {
            let sim = SimulatedDetector::new(&wake, Arc::new(res.clone()), cfg.simulator).map_err(config_err)?;
            search_with(&wake, &sim, cfg, seed, &res, exec)
        }
        OracleSpec::Exec(cmd) => {
            if !(cfg.oracle_timeout_secs > 0.0 && cfg.oracle_timeout_secs.is_finite()) {
                return Err(config_err("oracle_timeout_secs must be positive"));
            }
            let ext = ExternalOracle::spawn(cmd, Duration::from_secs_f64(cfg.oracle_timeout_secs))
                .map_err(|e| CliError::Oracle(e.to_string()))?;
            search_with(&wake, &ext, cfg, seed, &res, exec)
        }
    };
    let archive = match result {
        Ok(a) => a,
        Err(EvolveError::Oracle(e, partial)) => {
            if let Some(a) = partial {
                write(&dir.join("archive.partial.json"), a.to_json() + "\n")?;
                eprintln!("fakewake: partial archive written to {}", dir.join("archive.partial.json").display());
            }
            return Err(CliError::Oracle(e.to_string()));
        }
        Err(e) => return Err(e.into()),
    };

    write(&dir.join("archive.json"), archive.to_json() + "\n")?;
    write(&dir.join("summary.tsv"), summary_tsv(&archive))?;
    let mut m = Manifest::new("generate", seed, cfg);
    m.oracle = Some(archive.run.oracle.clone());
    m.queries = Some(archive.run.queries);
    m.files = vec!["archive.json", "summary.tsv"];
    m.write(dir)?;
    println!(
        "{} fuzzy words ({} with wake rate >= 0.8), {} non-fuzzy, {} queries -> {}",
        archive.candidates.len(),
        archive.with_min_rate(0.8).count(),
        archive.non_fuzzy.len(),
        archive.run.queries,
        dir.display()
    );
    Ok(())
}

pub fn explain(cfg: &RunConfig, archive_path: &Path) -> Result<(), CliError> {
    let (archive, hash) = load_archive(archive_path)?;
    let seed = cfg.seed.unwrap_or(archive.run.seed);
    let res = resources()?;
    let exec = exec_for(cfg)?;
    let dir = out_dir(cfg)?;
    let e = explain_archive(&archive, &cfg.explain, seed, &res, exec)?;

    write(&dir.join("model.json"), e.model.to_json() + "\n")?;
    write(&dir.join("explain.json"), serde_json::to_string_pretty(&e.report).expect("report serializes") + "\n")?;
    write(&dir.join("factors.tsv"), e.report.factors_tsv(&res))?;
    write(&dir.join("grouping.tsv"), e.report.grouping_tsv())?;
    write(&dir.join("ranking.tsv"), e.report.ranking_tsv())?;
    let mut m = Manifest::new("explain", seed, cfg);
    m.input = Some(Input { path: archive_path.to_path_buf(), fnv1a: hash });
    m.files = vec!["model.json", "explain.json", "factors.tsv", "grouping.tsv", "ranking.tsv"];
    m.write(dir)?;

    println!("cv accuracy {:.4} ({} fuzzy / {} non-fuzzy)", e.report.cv_accuracy, e.report.fuzzy_samples, e.report.non_fuzzy_samples);
    let top: Vec<String> =
        e.report.ranking.iter().take(5).map(|r| format!("{} ({:.3})", r.symbol, r.total)).collect();
    println!("top decisive units: {}", top.join(", "));
    Ok(())
}

pub fn mitigate(cfg: &RunConfig, archive_path: &Path) -> Result<(), CliError> {
    let seed = cfg.require_seed()?;
    let (archive, hash) = load_archive(archive_path)?;
    let res = resources()?;
    let exec = exec_for(cfg)?;
    let dir = out_dir(cfg)?;
    let mut mit = run_mitigation(&archive, &cfg.mitigate, seed, &res, exec)?;
    match explain_archive(&archive, &cfg.explain, seed, &res, exec) {
        Ok(e) => mit.summary.screening = screening_report(&archive, &e.report.ranking, cfg.mitigate.screening_depth, &res)?,
        Err(e) => eprintln!("fakewake: screening skipped: {e}"),
    }

    write(&dir.join("mitigation.json"), mit.summary.to_json() + "\n")?;
    write(&dir.join("mitigation.txt"), mit.summary.table())?;
    write(&dir.join("original_model.json"), mit.original.model.to_json() + "\n")?;
    write(&dir.join("strengthened_model.json"), mit.strengthened.model.to_json() + "\n")?;
    mit.triple.write_dir(&dir.join("dataset")).map_err(failed)?;
    let mut m = Manifest::new("mitigate", seed, cfg);
    m.input = Some(Input { path: archive_path.to_path_buf(), fnv1a: hash });
    m.files = vec!["mitigation.json", "mitigation.txt", "original_model.json", "strengthened_model.json", "dataset/"];
    m.write(dir)?;
    print!("{}", mit.summary.table());
    Ok(())
}

pub fn dist(cfg: &RunConfig, a: &str, b: &str) -> Result<(), CliError> {
    cfg.distance.validate().map_err(config_err)?;
    let res = resources()?;
    let wa = parse_word(cfg.language, a, &res)?;
    let wb = parse_word(cfg.language, b, &res)?;
    let d = word_dist(&wa, &wb, &cfg.distance, &res).map_err(config_err)?;
    println!("{d}");
    Ok(())
}

pub fn validate(cfg: &RunConfig, words: &[String]) -> Result<(), CliError> {
    let res = resources()?;
    let mut bad = Vec::new();
    for w in words {
        match parse_word(cfg.language, w, &res) {
            Ok(word) => {
                let units: Vec<&str> = word.units(&res).into_iter().map(|u| res.unit_symbol(u)).collect();
                println!("ok\t{}\t{}", word.text(&res), units.join(" "));
            }
            Err(CliError::Config(msg)) => {
                println!("invalid\t{w}");
                bad.push(msg);
            }
            Err(e) => return Err(e),
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(bad.join("\n")))
    }
}
