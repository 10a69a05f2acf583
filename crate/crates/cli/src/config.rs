//! Run configuration: a `key=value` file plus command-line overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use lattice_slu::lattice_parser::DEFAULT_MAX_ITEMS;
use lattice_slu::search::{DEFAULT_K_NLP, DEFAULT_K_WG};
use lattice_slu::wordgraph::PAUSE;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Speech,
    Bigram,
    Trigram,
    SpeechBigram,
    SpeechTrigram,
    NlpSpeech,
    NlpSpeechBigram,
    NlpSpeechTrigram,
    Best1Bigram,
    Best1Trigram,
    Possible,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Speech,
        Method::Bigram,
        Method::Trigram,
        Method::SpeechBigram,
        Method::SpeechTrigram,
        Method::NlpSpeech,
        Method::NlpSpeechBigram,
        Method::NlpSpeechTrigram,
        Method::Best1Bigram,
        Method::Best1Trigram,
        Method::Possible,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Speech => "speech",
            Method::Bigram => "bigram",
            Method::Trigram => "trigram",
            Method::SpeechBigram => "speech_bigram",
            Method::SpeechTrigram => "speech_trigram",
            Method::NlpSpeech => "nlp_speech",
            Method::NlpSpeechBigram => "nlp_speech_bigram",
            Method::NlpSpeechTrigram => "nlp_speech_trigram",
            Method::Best1Bigram => "best_1_bigram",
            Method::Best1Trigram => "best_1_trigram",
            Method::Possible => "possible",
        }
    }

    /// N-gram order the method needs, if any.
    pub fn ngram_order(self) -> Option<usize> {
        match self {
            Method::Bigram | Method::SpeechBigram | Method::NlpSpeechBigram | Method::Best1Bigram => Some(2),
            Method::Trigram | Method::SpeechTrigram | Method::NlpSpeechTrigram | Method::Best1Trigram => Some(3),
            _ => None,
        }
    }

    pub fn uses_parser(self) -> bool {
        matches!(self, Method::NlpSpeech | Method::NlpSpeechBigram | Method::NlpSpeechTrigram)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ConfigError(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub method: Method,
    pub grammar: Option<PathBuf>,
    pub slots: Option<PathBuf>,
    pub k_nlp: f64,
    pub k_wg: f64,
    pub ngram_bias: f64,
    pub fallback_threshold: usize,
    pub nbest: usize,
    pub derivation_cap: usize,
    pub pause_label: String,
    pub bigram_model: Option<PathBuf>,
    pub trigram_model: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            method: Method::NlpSpeech,
            grammar: None,
            slots: None,
            k_nlp: DEFAULT_K_NLP,
            k_wg: DEFAULT_K_WG,
            ngram_bias: 0.0,
            fallback_threshold: 100,
            nbest: 1,
            derivation_cap: DEFAULT_MAX_ITEMS,
            pause_label: PAUSE.to_string(),
            bigram_model: None,
            trigram_model: None,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError(format!("bad value {v:?} for {key}")))
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key.trim() {
            "method" => self.method = value.parse()?,
            "grammar" => self.grammar = Some(value.into()),
            "slots" => self.slots = Some(value.into()),
            "k_nlp" => self.k_nlp = num(key, value)?,
            "k_wg" => self.k_wg = num(key, value)?,
            "ngram_bias" => self.ngram_bias = num(key, value)?,
            "fallback_threshold" => self.fallback_threshold = num(key, value)?,
            "nbest" => {
                self.nbest = num(key, value)?;
                if self.nbest == 0 {
                    return Err(ConfigError("nbest must be at least 1".into()));
                }
            }
            "derivation_cap" => self.derivation_cap = num(key, value)?,
            "pause_label" if !value.is_empty() => self.pause_label = value.to_string(),
            "bigram_model" => self.bigram_model = Some(value.into()),
            "trigram_model" => self.trigram_model = Some(value.into()),
            other => return Err(ConfigError(format!("unknown or empty setting {other:?}"))),
        }
        if !(self.k_nlp.is_finite() && self.k_wg.is_finite() && self.ngram_bias.is_finite()) {
            return Err(ConfigError(format!("{key} must be finite")));
        }
        Ok(())
    }

    /// Applies `key=value` lines. Lines starting with `#` are comments.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("config line {}: expected key=value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| ConfigError(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("override {kv:?}: expected key=value")))?;
        self.set(k, v)
    }

    /// Every setting as `key=value` lines, in a fixed order.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        format!(
            "method={}\ngrammar={}\nslots={}\nk_nlp={}\nk_wg={}\nngram_bias={}\nfallback_threshold={}\nnbest={}\nderivation_cap={}\npause_label={}\nbigram_model={}\ntrigram_model={}\n",
            self.method,
            path(&self.grammar),
            path(&self.slots),
            self.k_nlp,
            self.k_wg,
            self.ngram_bias,
            self.fallback_threshold,
            self.nbest,
            self.derivation_cap,
            self.pause_label,
            path(&self.bigram_model),
            path(&self.trigram_model),
        )
    }
}
