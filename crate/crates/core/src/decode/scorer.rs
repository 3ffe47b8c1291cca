use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const START: &str = "<s>";
pub const END: &str = "</s>";

/// Next-token log-probabilities over a finite vocabulary that includes an
/// end token. Implementations must be safe to share across threads.
pub trait TokenScorer: Sync {
    /// Token strings indexed by id.
    fn vocab(&self) -> &[String];

    fn end_id(&self) -> usize;

    /// Log-probabilities for the token following `prefix`. Impossible tokens
    /// are `-inf`; the finite entries normalize.
    fn log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>>;
}

/// Join token strings with spaces, attaching punctuation tokens to the
/// preceding word. The end token is dropped.
pub fn detokenize(scorer: &dyn TokenScorer, tokens: &[usize]) -> String {
    let vocab = scorer.vocab();
    let mut out = String::new();
    for &t in tokens.iter().filter(|&&t| t != scorer.end_id()) {
        let s = vocab[t].as_str();
        let punct = !s.is_empty() && s.chars().all(|c| matches!(c, ';' | ',' | '.' | '!' | '?'));
        if !out.is_empty() && !punct {
            out.push(' ');
        }
        out.push_str(s);
    }
    out
}

/// Numerically stable log(sum(exp(xs))) ignoring `-inf` entries.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Back-off n-gram model read from a plain-text table.
///
/// ```text
/// order 2
/// vocab a b
/// ctx <s> | a 0.6 b 0.4
/// ctx a | </s> 1
/// ctx | a 0.2 b 0.3 </s> 0.5
/// ```
///
/// The end token `</s>` is appended to the vocabulary. A context holds up
/// to `order - 1` tokens, padded on the left with the start symbol.
/// Lookup falls back to ever shorter suffixes of the context and finally to
/// a uniform distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramLM {
    order: usize,
    vocab: Vec<String>,
    ids: HashMap<String, usize>,
    rows: HashMap<Vec<String>, Vec<f64>>,
    context_tokens: HashSet<String>,
}

impl NgramLM {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut order = None;
        let mut vocab: Option<Vec<String>> = None;
        let mut pending = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Malformed { line: lineno, message };
            let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            match head {
                "order" => {
                    let n: usize = rest.trim().parse().map_err(|_| bad(format!("bad order {rest:?}")))?;
                    if n == 0 {
                        return Err(bad("order must be at least 1".into()));
                    }
                    order = Some(n);
                }
                "vocab" => {
                    let toks: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                    if toks.is_empty() {
                        return Err(bad("empty vocabulary".into()));
                    }
                    vocab = Some(toks);
                }
                "ctx" => pending.push((lineno, rest.to_string())),
                other => return Err(bad(format!("unknown directive {other:?}"))),
            }
        }
        let order = order.ok_or_else(|| Error::Malformed {
            line: 0,
            message: "missing order line".into(),
        })?;
        let mut vocab = vocab.ok_or_else(|| Error::Malformed {
            line: 0,
            message: "missing vocab line".into(),
        })?;
        vocab.push(END.to_string());
        let mut ids = HashMap::new();
        for (i, t) in vocab.iter().enumerate() {
            if t == START || ids.insert(t.clone(), i).is_some() {
                return Err(Error::Malformed {
                    line: 0,
                    message: format!("vocabulary token {t:?} is reserved or repeated"),
                });
            }
        }
        let mut rows = HashMap::new();
        let mut context_tokens = HashSet::new();
        for (lineno, body) in pending {
            let bad = |message: String| Error::Malformed { line: lineno, message };
            let (ctx, dist) = body.split_once('|').ok_or_else(|| bad("missing '|' in ctx row".into()))?;
            let ctx: Vec<String> = ctx.split_whitespace().map(str::to_string).collect();
            if ctx.len() >= order {
                return Err(bad(format!("context longer than order - 1 = {}", order - 1)));
            }
            let parts: Vec<&str> = dist.split_whitespace().collect();
            if parts.len() % 2 != 0 || parts.is_empty() {
                return Err(bad("row must list token/probability pairs".into()));
            }
            let mut probs = vec![0.0; vocab.len()];
            let mut seen = HashSet::new();
            for pair in parts.chunks(2) {
                let id = *ids.get(pair[0]).ok_or_else(|| bad(format!("unknown token {:?}", pair[0])))?;
                let p: f64 = pair[1].parse().map_err(|_| bad(format!("bad probability {:?}", pair[1])))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad(format!("probability {p} outside [0, 1]")));
                }
                if !seen.insert(id) {
                    return Err(bad(format!("token {:?} listed twice", pair[0])));
                }
                probs[id] = p;
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(bad(format!("probabilities sum to {total}, not 1")));
            }
            context_tokens.extend(ctx.iter().cloned());
            if rows.insert(ctx, probs).is_some() {
                return Err(bad("context defined twice".into()));
            }
        }
        Ok(Self {
            order,
            vocab,
            ids,
            rows,
            context_tokens,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(crate::dataio::open(path)?)
    }

    /// Whether `token` appears in any context of the table.
    pub fn knows_context_token(&self, token: &str) -> bool {
        self.context_tokens.contains(token)
    }

    /// View of the model whose context padding uses `start` instead of the
    /// plain start symbol, when the table mentions it.
    pub fn conditioned(&self, start: &str) -> Conditioned<'_> {
        let start = if self.knows_context_token(start) { start } else { START };
        Conditioned {
            lm: self,
            start: start.to_string(),
        }
    }

    fn distribution(&self, start: &str, prefix: &[usize]) -> Result<Vec<f64>> {
        let n = self.order - 1;
        let mut history: Vec<String> = Vec::with_capacity(n);
        let tail = &prefix[prefix.len().saturating_sub(n)..];
        for _ in tail.len()..n {
            history.push(start.to_string());
        }
        for &t in tail {
            let tok = self
                .vocab
                .get(t)
                .ok_or_else(|| Error::LanguageModel(format!("token id {t} out of range")))?;
            history.push(tok.clone());
        }
        for skip in 0..=n {
            if let Some(row) = self.rows.get(&history[skip..]) {
                return Ok(row.iter().map(|p| p.ln()).collect());
            }
        }
        let u = -(self.vocab.len() as f64).ln();
        Ok(vec![u; self.vocab.len()])
    }
}

impl FromStr for NgramLM {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::read(s.as_bytes())
    }
}

impl TokenScorer for NgramLM {
    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn end_id(&self) -> usize {
        self.vocab.len() - 1
    }

    fn log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.distribution(START, prefix)
    }
}

#[derive(Debug, Clone)]
pub struct Conditioned<'a> {
    lm: &'a NgramLM,
    start: String,
}

impl Conditioned<'_> {
    pub fn start(&self) -> &str {
        &self.start
    }
}

impl TokenScorer for Conditioned<'_> {
    fn vocab(&self) -> &[String] {
        &self.lm.vocab
    }

    fn end_id(&self) -> usize {
        self.lm.end_id()
    }

    fn log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.lm.distribution(&self.start, prefix)
    }
}
