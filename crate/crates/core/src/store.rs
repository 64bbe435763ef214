//! On-disk model registry.
//!
//! A registry directory (default `HMMs`) holds a flat `models` file mapping
//! each word to its model file, one `word<TAB>relative-path` line per word,
//! sorted by word, `#` comments allowed. Each model is a line-oriented
//! `.whmm` text file:
//!
//! ```text
//! format-version 1
//! word <word>
//! N <states>
//! D <dim>
//! feature-params frame_len_ms=<r> frame_shift_ms=<r> preemphasis=<r> n_mel_filters=<i> n_cepstra=<i> energy_floor=<r> fmin_hz=<r> fmax_hz=<r|auto>
//! initial <N reals>
//! transition <N reals>        (N lines)
//! mean <D reals>              (then)
//! variance <D reals>          (one pair per state)
//! ```
//!
//! Reals carry 17 significant digits, which round-trips every `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::features::FeatureParams;
use crate::hmm::{GaussianState, WordHmm};

pub const DEFAULT_REGISTRY_DIR: &str = "HMMs";
pub const REGISTRY_FILE: &str = "models";
pub const MODEL_EXTENSION: &str = "whmm";
pub const FORMAT_VERSION: u32 = 1;

const LOCK_FILE: &str = "models.lock";
const LOCK_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("registry file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("{}:{line}: {message}", path.display())]
    ParseError {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("model file for '{word}' is missing: {}", path.display())]
    MissingModelFile { word: String, path: PathBuf },
    #[error("{}: {message}", path.display())]
    InvariantViolation { path: PathBuf, message: String },
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
    #[error("invalid word label '{0}': use letters, digits, '_' or '-'")]
    InvalidWord(String),
    #[error("registry is in-memory only and cannot be saved")]
    NotPersistent,
    #[error("I/O failure: {0}")]
    IoFailure(#[from] io::Error),
}

/// Word models sharing one feature front end.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    root_dir: Option<PathBuf>,
    entries: BTreeMap<String, PathBuf>,
    models: BTreeMap<String, WordHmm>,
    feature_params: Option<FeatureParams>,
}

impl ModelRegistry {
    pub fn in_memory(feature_params: FeatureParams) -> Self {
        Self {
            feature_params: Some(feature_params),
            ..Default::default()
        }
    }

    /// Loads `root` if its `models` file exists, otherwise starts an empty
    /// registry that will be created on the first save.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref();
        if root.join(REGISTRY_FILE).exists() {
            load_registry(root)
        } else {
            Ok(Self {
                root_dir: Some(root.to_path_buf()),
                ..Default::default()
            })
        }
    }

    pub fn root_dir(&self) -> Option<&Path> {
        self.root_dir.as_deref()
    }

    pub fn feature_params(&self) -> Option<&FeatureParams> {
        self.feature_params.as_ref()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.models.values().next().map(WordHmm::dim)
    }

    pub fn get(&self, word: &str) -> Option<&WordHmm> {
        self.models.get(word)
    }

    /// Models in word order.
    pub fn models(&self) -> impl Iterator<Item = (&str, &WordHmm)> {
        self.models.iter().map(|(w, m)| (w.as_str(), m))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    /// Adds or replaces a model in memory only.
    pub fn insert(&mut self, hmm: WordHmm) -> Result<(), StoreError> {
        if let Some(dim) = self.dim() {
            let replacing_only = self.models.len() == 1 && self.models.contains_key(&hmm.word);
            if hmm.dim() != dim && !replacing_only {
                return Err(StoreError::ParamMismatch(format!(
                    "model '{}' has D = {}, registry has D = {dim}",
                    hmm.word,
                    hmm.dim()
                )));
            }
        }
        self.models.insert(hmm.word.clone(), hmm);
        Ok(())
    }
}

pub fn is_valid_word(word: &str) -> bool {
    !word.is_empty() && !word.starts_with('-') && word.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-')
}

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_reals(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_real(x)).collect::<Vec<_>>().join(" ")
}

/// Text of a `.whmm` file.
pub fn serialize_model(hmm: &WordHmm, params: &FeatureParams) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format-version {FORMAT_VERSION}");
    let _ = writeln!(out, "word {}", hmm.word);
    let _ = writeln!(out, "N {}", hmm.n_states());
    let _ = writeln!(out, "D {}", hmm.dim());
    let _ = writeln!(
        out,
        "feature-params frame_len_ms={} frame_shift_ms={} preemphasis={} n_mel_filters={} n_cepstra={} energy_floor={} fmin_hz={} fmax_hz={}",
        fmt_real(params.frame_len_ms),
        fmt_real(params.frame_shift_ms),
        fmt_real(params.preemphasis),
        params.n_mel_filters,
        params.n_cepstra,
        fmt_real(params.energy_floor),
        fmt_real(params.fmin_hz),
        params.fmax_hz.map_or_else(|| "auto".to_string(), fmt_real),
    );
    let _ = writeln!(out, "initial {}", fmt_reals(&hmm.initial));
    for row in &hmm.transitions {
        let _ = writeln!(out, "transition {}", fmt_reals(row));
    }
    for s in &hmm.states {
        let _ = writeln!(out, "mean {}", fmt_reals(&s.mean));
        let _ = writeln!(out, "variance {}", fmt_reals(&s.variance));
    }
    out
}

/// Line-numbered reader over the `key value...` records of a model file.
struct Records<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

type Located<T> = Result<T, (usize, String)>;

impl<'a> Records<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate().peekable(),
        }
    }

    fn next_record(&mut self, key: &str) -> Located<(usize, &'a str)> {
        loop {
            let Some((i, line)) = self.lines.next() else {
                return Err((0, format!("unexpected end of file, expected '{key}'")));
            };
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
            if k != key {
                return Err((i + 1, format!("expected '{key}', found '{k}'")));
            }
            return Ok((i + 1, rest.trim()));
        }
    }

    fn finish(mut self) -> Located<()> {
        for (i, line) in self.lines.by_ref() {
            if !(line.trim().is_empty() || line.starts_with('#')) {
                return Err((i + 1, "unexpected trailing content".into()));
            }
        }
        Ok(())
    }
}

fn parse_usize(line: usize, s: &str) -> Located<usize> {
    s.parse()
        .map_err(|_| (line, format!("'{s}' is not a non-negative integer")))
}

fn parse_f64(line: usize, s: &str) -> Located<f64> {
    s.parse().map_err(|_| (line, format!("'{s}' is not a number")))
}

fn parse_reals(line: usize, s: &str, expected: usize) -> Located<Vec<f64>> {
    let values = s
        .split_whitespace()
        .map(|t| parse_f64(line, t))
        .collect::<Located<Vec<f64>>>()?;
    if values.len() != expected {
        return Err((line, format!("expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

fn parse_feature_params(line: usize, s: &str) -> Located<FeatureParams> {
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for token in s.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| (line, format!("'{token}' is not key=value")))?;
        if fields.insert(k, v).is_some() {
            return Err((line, format!("duplicate key '{k}'")));
        }
    }
    let mut take = |k: &str| fields.remove(k).ok_or_else(|| (line, format!("missing key '{k}'")));
    let params = FeatureParams {
        frame_len_ms: parse_f64(line, take("frame_len_ms")?)?,
        frame_shift_ms: parse_f64(line, take("frame_shift_ms")?)?,
        preemphasis: parse_f64(line, take("preemphasis")?)?,
        n_mel_filters: parse_usize(line, take("n_mel_filters")?)?,
        n_cepstra: parse_usize(line, take("n_cepstra")?)?,
        energy_floor: parse_f64(line, take("energy_floor")?)?,
        fmin_hz: parse_f64(line, take("fmin_hz")?)?,
        fmax_hz: match take("fmax_hz")? {
            "auto" => None,
            v => Some(parse_f64(line, v)?),
        },
    };
    if let Some(k) = fields.keys().next() {
        return Err((line, format!("unknown key '{k}'")));
    }
    Ok(params)
}

/// Parses `.whmm` text. Syntax problems carry their 1-based line number;
/// the model's structural invariants are not checked here.
pub fn parse_model(text: &str) -> Result<(WordHmm, FeatureParams), (usize, String)> {
    let mut r = Records::new(text);
    let (line, version) = r.next_record("format-version")?;
    if parse_usize(line, version)? != FORMAT_VERSION as usize {
        return Err((line, format!("unsupported format version {version}")));
    }
    let (line, word) = r.next_record("word")?;
    if !is_valid_word(word) {
        return Err((line, format!("invalid word '{word}'")));
    }
    let (line, n) = r.next_record("N")?;
    let n = parse_usize(line, n)?;
    let (line, d) = r.next_record("D")?;
    let d = parse_usize(line, d)?;
    if n == 0 || d == 0 {
        return Err((line, "N and D must be positive".into()));
    }
    let (line, fp) = r.next_record("feature-params")?;
    let params = parse_feature_params(line, fp)?;
    let (line, init) = r.next_record("initial")?;
    let initial = parse_reals(line, init, n)?;
    let mut transitions = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, row) = r.next_record("transition")?;
        transitions.push(parse_reals(line, row, n)?);
    }
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, m) = r.next_record("mean")?;
        let mean = parse_reals(line, m, d)?;
        let (line, v) = r.next_record("variance")?;
        let variance = parse_reals(line, v, d)?;
        states.push(GaussianState { mean, variance });
    }
    r.finish()?;
    Ok((
        WordHmm {
            word: word.to_string(),
            states,
            transitions,
            initial,
        },
        params,
    ))
}

fn model_file_name(word: &str) -> PathBuf {
    PathBuf::from(format!("{word}.{MODEL_EXTENSION}"))
}

fn serialize_registry(entries: &BTreeMap<String, PathBuf>) -> String {
    let mut out = String::from("# word<TAB>model file\n");
    for (word, path) in entries {
        let _ = writeln!(out, "{word}\t{}", path.display());
    }
    out
}

fn parse_registry(path: &Path, text: &str) -> Result<BTreeMap<String, PathBuf>, StoreError> {
    let err = |line: usize, message: String| StoreError::ParseError {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (word, file) = line
            .split_once('\t')
            .ok_or_else(|| err(i + 1, "expected 'word<TAB>path'".into()))?;
        let word = word.trim();
        let file = file.trim();
        if !is_valid_word(word) {
            return Err(err(i + 1, format!("invalid word '{word}'")));
        }
        if file.is_empty() {
            return Err(err(i + 1, format!("no model path for '{word}'")));
        }
        if entries.insert(word.to_string(), PathBuf::from(file)).is_some() {
            return Err(err(i + 1, format!("duplicate word '{word}'")));
        }
    }
    Ok(entries)
}

fn read_registry_file(root: &Path) -> Result<BTreeMap<String, PathBuf>, StoreError> {
    let path = root.join(REGISTRY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => StoreError::NotFound(path.clone()),
        _ => StoreError::IoFailure(e),
    })?;
    parse_registry(&path, &text)
}

/// Reads and fully validates the registry under `root`.
pub fn load_registry(root: impl AsRef<Path>) -> Result<ModelRegistry, StoreError> {
    let root = root.as_ref();
    let entries = read_registry_file(root)?;
    let mut registry = ModelRegistry {
        root_dir: Some(root.to_path_buf()),
        ..Default::default()
    };
    for (word, rel) in &entries {
        let path = root.join(rel);
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::MissingModelFile {
                word: word.clone(),
                path: path.clone(),
            },
            _ => StoreError::IoFailure(e),
        })?;
        let (hmm, params) = parse_model(&text).map_err(|(line, message)| StoreError::ParseError {
            path: path.clone(),
            line,
            message,
        })?;
        let violation = |message: String| StoreError::InvariantViolation {
            path: path.clone(),
            message,
        };
        if &hmm.word != word {
            return Err(violation(format!(
                "file holds word '{}', registry says '{word}'",
                hmm.word
            )));
        }
        hmm.validate().map_err(|e| violation(e.to_string()))?;
        if hmm.dim() != params.dim() {
            return Err(violation(format!(
                "D = {} does not match feature parameters (D = {})",
                hmm.dim(),
                params.dim()
            )));
        }
        match &registry.feature_params {
            Some(p) if *p != params => {
                return Err(violation("feature parameters differ from other registry models".into()))
            }
            _ => registry.feature_params = Some(params),
        }
        registry.models.insert(word.clone(), hmm);
    }
    registry.entries = entries;
    Ok(registry)
}

/// Exclusive access to a registry directory, held through a lock file.
struct RegistryLock(PathBuf);

impl RegistryLock {
    fn acquire(root: &Path) -> Result<Self, StoreError> {
        let path = root.join(LOCK_FILE);
        let start = Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(Self(path)),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists && start.elapsed() < LOCK_TIMEOUT => {
                    thread::sleep(Duration::from_millis(20));
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    return Err(StoreError::IoFailure(io::Error::new(
                        io::ErrorKind::WouldBlock,
                        format!("registry lock {} held for over {LOCK_TIMEOUT:?}", path.display()),
                    )))
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

impl Drop for RegistryLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Writes `<root>/<word>.whmm` and inserts or replaces the word's line in
/// `<root>/models`.
pub fn save_model(hmm: &WordHmm, params: &FeatureParams, registry: &mut ModelRegistry) -> Result<(), StoreError> {
    if !is_valid_word(&hmm.word) {
        return Err(StoreError::InvalidWord(hmm.word.clone()));
    }
    let root = registry.root_dir.clone().ok_or(StoreError::NotPersistent)?;
    hmm.validate().map_err(|e| StoreError::InvariantViolation {
        path: root.join(model_file_name(&hmm.word)),
        message: e.to_string(),
    })?;
    if hmm.dim() != params.dim() {
        return Err(StoreError::ParamMismatch(format!(
            "model D = {} but feature parameters produce D = {}",
            hmm.dim(),
            params.dim()
        )));
    }
    let existing = registry.models().find(|(w, _)| *w != hmm.word).map(|(_, m)| m.dim());
    if let Some(dim) = existing {
        if dim != hmm.dim() {
            return Err(StoreError::ParamMismatch(format!(
                "model D = {} but registry models have D = {dim}",
                hmm.dim()
            )));
        }
        if registry.feature_params.as_ref().is_some_and(|p| p != params) {
            return Err(StoreError::ParamMismatch(
                "feature parameters differ from the registry's".into(),
            ));
        }
    }

    fs::create_dir_all(&root)?;
    let _lock = RegistryLock::acquire(&root)?;
    // merge with whatever other writers have saved since this registry was read
    let mut entries = match read_registry_file(&root) {
        Ok(e) => e,
        Err(StoreError::NotFound(_)) => BTreeMap::new(),
        Err(e) => return Err(e),
    };
    let rel = model_file_name(&hmm.word);
    write_atomic(&root.join(&rel), &serialize_model(hmm, params))?;
    entries.insert(hmm.word.clone(), rel);
    write_atomic(&root.join(REGISTRY_FILE), &serialize_registry(&entries))?;

    registry.entries = entries;
    registry.models.insert(hmm.word.clone(), hmm.clone());
    registry.feature_params = Some(params.clone());
    Ok(())
}
