//! Text preprocessing: noise removal, contraction and hashtag expansion,
//! stopword filtering, suffix-stripping lemmatization, vocabulary building,
//! and TF-IDF vectorization.
//!
//! The stopword list, contraction table, and typo table are data files
//! shipped with the crate. The lemmatizer is rule-based; each token is
//! reduced to a fixpoint of the rules, which is what makes `clean`
//! idempotent.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

pub const STOPWORDS: &str = include_str!("data/stopwords.txt");
pub const CONTRACTIONS: &str = include_str!("data/contractions.tsv");
pub const TYPOS: &str = include_str!("data/typos.tsv");

/// Index reserved for padding.
pub const PAD: usize = 0;
/// Index reserved for out-of-vocabulary tokens.
pub const UNK: usize = 1;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("corpus io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus parse: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column '{0}' in corpus header")]
    MissingColumn(&'static str),
    #[error("document {id}: label '{label}' is not 0 or 1")]
    BadLabel { id: String, label: String },
    #[error("document id '{0}' is not an integer")]
    BadId(String),
    #[error("duplicate document id {0}")]
    DuplicateId(u64),
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("vocabulary file format: {0}")]
    VocabFormat(String),
}

/// One labeled document.
#[derive(Debug, Clone)]
pub struct Document {
    pub id: u64,
    pub text: String,
    pub label: u8,
}

/// Reads a corpus CSV/TSV with header columns `id,text,label`. The
/// delimiter is a tab when the file extension is `.tsv`, comma otherwise.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>, TextError> {
    let delim = if path.extension().is_some_and(|e| e == "tsv") {
        b'\t'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new().delimiter(delim).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &'static str| -> Result<usize, TextError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(TextError::MissingColumn(name))
    };
    let (id_col, text_col, label_col) = (col("id")?, col("text")?, col("label")?);
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record?;
        let id_raw = record.get(id_col).unwrap_or("");
        let id: u64 = id_raw
            .trim()
            .parse()
            .map_err(|_| TextError::BadId(id_raw.to_string()))?;
        if !seen.insert(id) {
            return Err(TextError::DuplicateId(id));
        }
        let label_raw = record.get(label_col).unwrap_or("").trim();
        let label = match label_raw {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(TextError::BadLabel {
                    id: id_raw.to_string(),
                    label: other.to_string(),
                })
            }
        };
        docs.push(Document {
            id,
            text: record.get(text_col).unwrap_or("").to_string(),
            label,
        });
    }
    Ok(docs)
}

struct Tables {
    stopwords: HashSet<&'static str>,
    contractions: HashMap<String, &'static str>,
    typos: HashMap<&'static str, &'static str>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| Tables {
        stopwords: STOPWORDS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect(),
        contractions: CONTRACTIONS
            .lines()
            .filter_map(|l| l.split_once('\t'))
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        typos: TYPOS.lines().filter_map(|l| l.split_once('\t')).collect(),
    })
}

struct Patterns {
    email: Regex,
    username: Regex,
    url: Regex,
    multidot: Regex,
}

fn patterns() -> &'static Patterns {
    static PATTERNS: OnceLock<Patterns> = OnceLock::new();
    PATTERNS.get_or_init(|| Patterns {
        email: Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}").unwrap(),
        username: Regex::new(r"\B@\w+").unwrap(),
        url: Regex::new(r"(?:https?://|www\.)\S+").unwrap(),
        multidot: Regex::new(r"\.{2,}|…").unwrap(),
    })
}

/// Splits a hashtag body on lower-to-upper case boundaries:
/// `StopImmigration` becomes `Stop Immigration`.
fn split_case_boundaries(word: &str) -> String {
    let mut out = String::with_capacity(word.len() + 4);
    let mut prev_lower = false;
    for ch in word.chars() {
        if ch.is_uppercase() && prev_lower {
            out.push(' ');
        }
        prev_lower = ch.is_lowercase();
        out.push(ch);
    }
    out
}

/// Rule-based suffix stripper, applied to a fixpoint so re-lemmatizing a
/// lemma is a no-op.
pub fn lemmatize(token: &str) -> String {
    let mut w = token.to_string();
    for _ in 0..10 {
        let next = lemma_pass(&w);
        if next == w {
            break;
        }
        w = next;
    }
    w
}

fn lemma_pass(w: &str) -> String {
    let n = w.len();
    if !w.is_ascii() {
        return w.to_string();
    }
    if n > 4 {
        if let Some(stem) = w.strip_suffix("ies") {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = w.strip_suffix("es") {
        if stem.len() >= 3
            && (stem.ends_with("ss")
                || stem.ends_with('x')
                || stem.ends_with('z')
                || stem.ends_with("ch")
                || stem.ends_with("sh")
                || stem.ends_with('s'))
        {
            return stem.to_string();
        }
    }
    if n > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        return w[..n - 1].to_string();
    }
    if let Some(stem) = w.strip_suffix("ing") {
        if stem.len() >= 3 {
            return undouble(stem);
        }
    }
    if let Some(stem) = w.strip_suffix("ed") {
        if stem.len() >= 3 {
            return undouble(stem);
        }
    }
    if let Some(stem) = w.strip_suffix("ly") {
        if stem.len() >= 3 {
            return stem.to_string();
        }
    }
    w.to_string()
}

/// Drops a trailing doubled consonant (except l, s, z): `runn` to `run`.
fn undouble(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 2 && b[n - 1] == b[n - 2] {
        let c = b[n - 1] as char;
        if c.is_ascii_alphabetic() && !"aeioulsz".contains(c) {
            return stem[..n - 1].to_string();
        }
    }
    stem.to_string()
}

/// The full cleaning pipeline. Output is lowercase tokens joined by single
/// spaces; may be empty. `clean` is idempotent.
pub fn clean(raw: &str) -> String {
    let t = tables();
    let p = patterns();

    // Character-level noise removal. Emails go before usernames so an
    // address is not half-eaten by the @handle rule.
    let s = p.email.replace_all(raw, " ");
    let s = p.url.replace_all(&s, " ");
    let s = p.username.replace_all(&s, " ");
    let s = p.multidot.replace_all(&s, " ");

    // Separator punctuation becomes a space; apostrophes and hashtags
    // survive for the contraction and hashtag passes.
    let s: String = s
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() || c == '\'' || c == '’' || c == '#' {
                if c == '’' {
                    '\''
                } else {
                    c
                }
            } else {
                ' '
            }
        })
        .collect();

    // Contractions, hashtag case-splitting, lowercasing.
    let mut words: Vec<String> = Vec::new();
    for tok in s.split_whitespace() {
        let lower_key = tok.to_lowercase();
        if let Some(expansion) = t.contractions.get(&lower_key) {
            words.extend(expansion.split_whitespace().map(str::to_string));
        } else if let Some(body) = tok.strip_prefix('#') {
            let body = body.replace('#', "");
            for part in split_case_boundaries(&body).split_whitespace() {
                words.push(part.to_lowercase());
            }
        } else {
            words.push(lower_key);
        }
    }
    // Apostrophes and hash marks that survived the passes above are dropped.
    let mut tokens: Vec<String> = words
        .into_iter()
        .map(|w| w.replace(['\'', '#'], ""))
        .filter(|w| !w.is_empty())
        .collect();

    // Typos, stopwords, lemmas: iterate to a fixpoint, since a lemma can
    // land on a stopword or a typo key.
    for _ in 0..5 {
        let mut next: Vec<String> = Vec::with_capacity(tokens.len());
        for tok in &tokens {
            let corrected: &str = t.typos.get(tok.as_str()).copied().unwrap_or(tok);
            for word in corrected.split_whitespace() {
                if t.stopwords.contains(word) {
                    continue;
                }
                let lemma = lemmatize(word);
                if !t.stopwords.contains(lemma.as_str()) {
                    next.push(lemma);
                }
            }
        }
        if next == tokens {
            break;
        }
        tokens = next;
    }
    tokens.join(" ")
}

/// Whitespace tokenization of cleaned text.
pub fn tokenize(cleaned: &str) -> Vec<String> {
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Token-to-index map with document frequencies. Indices 0 and 1 are the
/// PAD and UNK specials; real tokens start at 2, ordered by descending
/// corpus frequency with lexicographic tie-break, capped at `cap` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    doc_freq: Vec<u32>,
    n_docs: usize,
}

pub const DEFAULT_VOCAB_CAP: usize = 20_000;

impl Vocabulary {
    /// Builds from tokenized training documents only.
    pub fn build(docs: &[Vec<String>], cap: usize) -> Vocabulary {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        let mut df: HashMap<&str, u32> = HashMap::new();
        for doc in docs {
            let mut seen: HashSet<&str> = HashSet::new();
            for tok in doc {
                *freq.entry(tok).or_insert(0) += 1;
                if seen.insert(tok) {
                    *df.entry(tok).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(cap);

        let mut tokens = vec!["<pad>".to_string(), "<unk>".to_string()];
        let mut doc_freq = vec![0u32, 0u32];
        let mut index = HashMap::new();
        for (tok, _) in ranked {
            index.insert(tok.to_string(), tokens.len());
            doc_freq.push(df[tok]);
            tokens.push(tok.to_string());
        }
        Vocabulary {
            index,
            tokens,
            doc_freq,
            n_docs: docs.len(),
        }
    }

    /// Total width including the two specials.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn doc_freq(&self, index: usize) -> u32 {
        self.doc_freq[index]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Token ids for the embedding path; out-of-vocabulary tokens map to UNK.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.get(t).unwrap_or(UNK)).collect()
    }

    /// Smoothed inverse document frequency: ln((1+n)/(1+df)) + 1.
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + f64::from(self.doc_freq[index]))).ln() + 1.0
    }

    /// Writes the vocabulary as a TSV so indices survive a save/load.
    pub fn save(&self, path: &Path) -> Result<(), TextError> {
        let mut f = fs::File::create(path)?;
        writeln!(f, "#n_docs\t{}", self.n_docs)?;
        for i in 2..self.tokens.len() {
            writeln!(f, "{}\t{}\t{}", self.tokens[i], i, self.doc_freq[i])?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary, TextError> {
        let content = fs::read_to_string(path)?;
        let mut lines = content.lines();
        let header = lines
            .next()
            .ok_or_else(|| TextError::VocabFormat("empty file".into()))?;
        let n_docs: usize = header
            .strip_prefix("#n_docs\t")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| TextError::VocabFormat("bad header".into()))?;
        let mut tokens = vec!["<pad>".to_string(), "<unk>".to_string()];
        let mut doc_freq = vec![0u32, 0u32];
        let mut index = HashMap::new();
        for line in lines {
            let mut parts = line.split('\t');
            let (tok, idx, df) = (
                parts.next().unwrap_or(""),
                parts.next().unwrap_or(""),
                parts.next().unwrap_or(""),
            );
            let idx: usize = idx
                .parse()
                .map_err(|_| TextError::VocabFormat(format!("bad index in '{line}'")))?;
            if idx != tokens.len() {
                return Err(TextError::VocabFormat(format!(
                    "non-dense index {idx} (expected {})",
                    tokens.len()
                )));
            }
            let df: u32 = df
                .parse()
                .map_err(|_| TextError::VocabFormat(format!("bad df in '{line}'")))?;
            index.insert(tok.to_string(), idx);
            tokens.push(tok.to_string());
            doc_freq.push(df);
        }
        Ok(Vocabulary {
            index,
            tokens,
            doc_freq,
            n_docs,
        })
    }
}

/// Sparse row vector over vocabulary columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    pub dim: usize,
    /// (column, value), sorted by column.
    pub entries: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &(i, x) in &self.entries {
            v[i] = x;
        }
        v
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|(_, x)| x * x).sum::<f64>().sqrt()
    }
}

/// TF-IDF rows for a set of tokenized documents: raw term counts weighted
/// by the vocabulary's idf, L2-normalized per row. Tokens outside the
/// vocabulary contribute nothing; a document with no known token yields an
/// all-zero row.
pub fn tfidf(docs: &[Vec<String>], vocab: &Vocabulary) -> Result<Vec<SparseVec>, TextError> {
    if vocab.is_empty() {
        return Err(TextError::EmptyVocabulary);
    }
    let dim = vocab.len();
    let mut rows = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for tok in doc {
            if let Some(i) = vocab.get(tok) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(i, tf)| (i, tf * vocab.idf(i)))
            .collect();
        entries.sort_by_key(|&(i, _)| i);
        let norm = entries.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        rows.push(SparseVec { dim, entries });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pure_noise_reduces_to_content() {
        assert_eq!(clean("@bob http://x.y hello..."), "hello");
    }

    #[test]
    fn contraction_then_stopwords_empties() {
        assert_eq!(clean("don't"), "");
    }

    #[test]
    fn empty_in_empty_out() {
        assert_eq!(clean(""), "");
    }

    #[test]
    fn emails_removed_whole() {
        assert_eq!(
            clean("contact bob.smith@example.com today"),
            "contact today"
        );
    }

    #[test]
    fn hashtags_split_on_case() {
        assert_eq!(clean("#StopImmigration"), "stop immigration");
    }

    #[test]
    fn typos_corrected() {
        // "teh" -> "the" (stopword), "recieve" -> "receive" -> "receiv"
        assert_eq!(clean("teh recieve"), "receive");
    }

    #[test]
    fn lemmatizer_examples() {
        assert_eq!(lemmatize("ponies"), "pony");
        assert_eq!(lemmatize("classes"), "class");
        assert_eq!(lemmatize("dogs"), "dog");
        assert_eq!(lemmatize("running"), "run");
        assert_eq!(lemmatize("quickly"), "quick");
        assert_eq!(lemmatize("boxes"), "box");
        // Fixpoint: stripping "ing" can expose another strippable suffix.
        assert_eq!(lemmatize(&lemmatize("stringing")), lemmatize("stringing"));
    }

    #[test]
    fn tokenize_whitespace() {
        assert_eq!(tokenize("a b  c"), vec!["a", "b", "c"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("refugees go home"), vec!["refugees", "go", "home"]);
    }

    #[test]
    fn clean_is_idempotent_on_samples() {
        let samples = [
            "@user Check https://example.com NOW!!! #MakeItStop...",
            "I don't think they're coming, it's too late…",
            "Teh cats were running and jumping; boxes of ponies!!!",
            "plain words only",
            "",
            "#CamelCaseTag #lowercase @a@b c@d.com",
        ];
        for s in samples {
            let once = clean(s);
            assert_eq!(clean(&once), once, "not idempotent on {s:?}");
        }
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(s in "[ -~]{0,80}") {
            let once = clean(&s);
            prop_assert_eq!(clean(&once), once);
        }

        #[test]
        fn lemmatize_is_idempotent(w in "[a-z]{1,12}") {
            let once = lemmatize(&w);
            prop_assert_eq!(lemmatize(&once), once);
        }
    }

    #[test]
    fn table_values_are_not_keys() {
        let t = tables();
        for value in t.typos.values() {
            for word in value.split_whitespace() {
                assert!(
                    !t.typos.contains_key(word),
                    "typo value '{word}' is itself a typo key"
                );
            }
        }
        for value in t.contractions.values() {
            for word in value.split_whitespace() {
                assert!(
                    !t.contractions.contains_key(word),
                    "contraction value '{word}' is itself a key"
                );
            }
        }
    }

    #[test]
    fn vocab_orders_by_frequency_then_token() {
        let docs: Vec<Vec<String>> = vec![tokenize("b b b a a c"), tokenize("a b z")];
        let v = Vocabulary::build(&docs, 100);
        // b freq 4, a freq 3, then c and z freq 1 in lexicographic order.
        assert_eq!(v.get("b"), Some(2));
        assert_eq!(v.get("a"), Some(3));
        assert_eq!(v.get("c"), Some(4));
        assert_eq!(v.get("z"), Some(5));
        assert_eq!(v.doc_freq(v.get("b").unwrap()), 2);
        assert_eq!(v.doc_freq(v.get("c").unwrap()), 1);
    }

    #[test]
    fn vocab_cap_keeps_most_frequent() {
        let docs: Vec<Vec<String>> = vec![tokenize("x x x y y z")];
        let v = Vocabulary::build(&docs, 2);
        assert_eq!(v.len(), 4); // pad, unk, x, y
        assert!(v.contains("x") && v.contains("y") && !v.contains("z"));
    }

    #[test]
    fn encode_maps_oov_to_unk() {
        let docs = vec![tokenize("alpha beta")];
        let v = Vocabulary::build(&docs, 10);
        let ids = v.encode(&tokenize("alpha gamma"));
        assert_eq!(ids[0], v.get("alpha").unwrap());
        assert_eq!(ids[1], UNK);
    }

    #[test]
    fn tfidf_single_token_doc_is_unit() {
        let docs = vec![tokenize("solo")];
        let v = Vocabulary::build(&docs, 10);
        let rows = tfidf(&docs, &v).unwrap();
        assert_eq!(rows[0].entries.len(), 1);
        assert_eq!(rows[0].entries[0].0, v.get("solo").unwrap());
        assert!((rows[0].entries[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tfidf_idf_closed_form() {
        // d1 = [a], d2 = [a, b]: idf(a) = ln(3/3)+1 = 1, idf(b) = ln(3/2)+1.
        let docs = vec![tokenize("a"), tokenize("a b")];
        let v = Vocabulary::build(&docs, 10);
        assert!((v.idf(v.get("a").unwrap()) - 1.0).abs() < 1e-15);
        let expect_b = (3.0f64 / 2.0).ln() + 1.0;
        assert!((v.idf(v.get("b").unwrap()) - expect_b).abs() < 1e-15);
    }

    #[test]
    fn tfidf_ignores_unknown_tokens() {
        let train = vec![tokenize("known words here")];
        let v = Vocabulary::build(&train, 10);
        let rows = tfidf(&[tokenize("unknown known")], &v).unwrap();
        assert_eq!(rows[0].entries.len(), 1);
        let norm = rows[0].l2_norm();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tfidf_rows_unit_or_zero() {
        let train: Vec<Vec<String>> = vec![
            tokenize("red green blue"),
            tokenize("red red yellow"),
            tokenize("green blue blue purple"),
        ];
        let v = Vocabulary::build(&train, 100);
        let test_docs = vec![
            tokenize("red blue blue"),
            tokenize("nothing matches this"),
            Vec::new(),
        ];
        let rows = tfidf(&test_docs, &v).unwrap();
        assert!((rows[0].l2_norm() - 1.0).abs() < 1e-12);
        assert_eq!(rows[1].entries.len(), 0);
        assert_eq!(rows[2].entries.len(), 0);
    }

    #[test]
    fn empty_vocab_rejected() {
        let v = Vocabulary::build(&[], 10);
        assert!(matches!(
            tfidf(&[tokenize("x")], &v),
            Err(TextError::EmptyVocabulary)
        ));
    }

    #[test]
    fn vocab_roundtrips_through_file() {
        let docs = vec![
            tokenize("alpha beta beta gamma"),
            tokenize("beta delta alpha"),
        ];
        let v = Vocabulary::build(&docs, 100);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(v, loaded);
    }

    #[test]
    fn corpus_reader_parses_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.csv");
        fs::write(
            &path,
            "id,text,label\n1,\"hello, world\",0\n2,second doc,1\n",
        )
        .unwrap();
        let docs = read_corpus(&path).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].text, "hello, world");
        assert_eq!(docs[1].label, 1);

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "id,text,label\n1,x,0\n1,y,1\n").unwrap();
        assert!(matches!(read_corpus(&bad), Err(TextError::DuplicateId(1))));

        let bad2 = dir.path().join("bad2.csv");
        fs::write(&bad2, "id,text,label\n1,x,2\n").unwrap();
        assert!(matches!(
            read_corpus(&bad2),
            Err(TextError::BadLabel { .. })
        ));
    }
}
