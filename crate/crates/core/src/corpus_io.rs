//! Readers and writers for the external data formats: CoNLL-U corpora,
//! whitespace-separated embedding tables and JSON-Lines pair records.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::{Annotation, OrdinalLabel};
use crate::error::{Error, Result};

/// One syntactic word of a dependency-parsed sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    /// Index of the head token, 0 for the root.
    pub head: usize,
    pub deprel: String,
}

impl Token {
    /// Relation without its subtype (`obl:tmod` -> `obl`).
    pub fn base_deprel(&self) -> &str {
        self.deprel.split(':').next().unwrap_or("")
    }
}

/// A dependency tree. Tokens are stored in order, so `tokens[i].index == i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepSentence {
    pub source_id: String,
    pub text: Option<String>,
    pub tokens: Vec<Token>,
}

impl DepSentence {
    /// Builds a sentence and checks the tree invariants.
    pub fn new(source_id: impl Into<String>, tokens: Vec<Token>) -> Result<Self> {
        let s = DepSentence {
            source_id: source_id.into(),
            text: None,
            tokens,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    pub fn root(&self) -> Option<&Token> {
        self.tokens.iter().find(|t| t.head == 0)
    }

    /// Direct dependents of `index`, in order.
    pub fn dependents(&self, index: usize) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(move |t| t.head == index)
    }

    /// Inclusive (min, max) token index range of the subtree rooted at `index`.
    pub fn subtree_span(&self, index: usize) -> (usize, usize) {
        let mut lo = index;
        let mut hi = index;
        let mut stack = vec![index];
        while let Some(i) = stack.pop() {
            for d in self.dependents(i) {
                lo = lo.min(d.index);
                hi = hi.max(d.index);
                stack.push(d.index);
            }
        }
        (lo, hi)
    }

    /// The sentence text: the `# text` comment if present, else the forms
    /// joined by spaces.
    pub fn surface(&self) -> String {
        match &self.text {
            Some(t) => t.clone(),
            None => self
                .tokens
                .iter()
                .map(|t| t.form.as_str())
                .collect::<Vec<_>>()
                .join(" "),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let structural = |msg: String| Error::Structure {
            sentence: self.source_id.clone(),
            msg,
        };
        let n = self.tokens.len();
        if n == 0 {
            return Err(structural("sentence has no tokens".into()));
        }
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i + 1 {
                return Err(structural(format!(
                    "token ids are not consecutive: expected {}, found {}",
                    i + 1,
                    t.index
                )));
            }
            if t.head > n {
                return Err(structural(format!(
                    "token {} has head {} outside the sentence",
                    t.index, t.head
                )));
            }
            if t.head == t.index {
                return Err(structural(format!("token {} is its own head", t.index)));
            }
        }
        let roots = self.tokens.iter().filter(|t| t.head == 0).count();
        if roots != 1 {
            return Err(structural(format!("expected exactly one root, found {roots}")));
        }
        // Every token must reach the root within n steps.
        for t in &self.tokens {
            let mut cur = t.head;
            let mut steps = 0;
            while cur != 0 {
                steps += 1;
                if steps > n {
                    return Err(structural(format!(
                        "cyclic head structure through token {}",
                        t.index
                    )));
                }
                cur = self.tokens[cur - 1].head;
            }
        }
        Ok(())
    }
}

/// Parses CoNLL-U text. `origin` is used in error messages.
pub fn parse_conllu(text: &str, origin: &str) -> Result<Vec<DepSentence>> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut sent_id: Option<String> = None;
    let mut sent_text: Option<String> = None;
    let mut start_line = 1;

    let mut finish = |tokens: &mut Vec<Token>,
                      sent_id: &mut Option<String>,
                      sent_text: &mut Option<String>,
                      start_line: usize|
     -> Result<()> {
        if tokens.is_empty() {
            sent_id.take();
            sent_text.take();
            return Ok(());
        }
        let id = sent_id
            .take()
            .unwrap_or_else(|| format!("{origin}#{}", sentences.len() + 1));
        let sentence = DepSentence {
            source_id: id,
            text: sent_text.take(),
            tokens: std::mem::take(tokens),
        };
        sentence.validate().map_err(|e| match e {
            Error::Structure { sentence, msg } => Error::Structure {
                sentence: format!("{sentence} (line {start_line})"),
                msg,
            },
            other => other,
        })?;
        sentences.push(sentence);
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut tokens, &mut sent_id, &mut sent_text, start_line)?;
            continue;
        }
        if tokens.is_empty() && sent_id.is_none() && sent_text.is_none() {
            start_line = lineno;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("sent_id") {
                sent_id = Some(v.trim_start_matches([' ', '=']).trim().to_string());
            } else if let Some(v) = comment.strip_prefix("text") {
                if let Some(v) = v.trim_start().strip_prefix('=') {
                    sent_text = Some(v.trim().to_string());
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 8 {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected at least 8 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id = fields[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let index: usize = id
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("bad token id {id:?}")))?;
        if index == 0 {
            return Err(Error::parse(origin, lineno, "token id 0 is reserved for the root"));
        }
        let head: usize = fields[6]
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("bad head {:?}", fields[6])))?;
        tokens.push(Token {
            index,
            form: fields[1].to_string(),
            lemma: fields[2].to_string(),
            upos: fields[3].to_string(),
            head,
            deprel: fields[7].to_string(),
        });
    }
    finish(&mut tokens, &mut sent_id, &mut sent_text, start_line)?;
    Ok(sentences)
}

pub fn load_conllu(path: impl AsRef<Path>) -> Result<Vec<DepSentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(&text, &path.display().to_string())
}

/// Serializes sentences back to CoNLL-U, filling unused columns with `_`.
pub fn write_conllu(sentences: &[DepSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&format!("# sent_id = {}\n", s.source_id));
        if let Some(t) = &s.text {
            out.push_str(&format!("# text = {t}\n"));
        }
        for t in &s.tokens {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t_\t_\t{}\t{}\t_\t_\n",
                t.index, t.form, t.lemma, t.upos, t.head, t.deprel
            ));
        }
        out.push('\n');
    }
    out
}

/// Word vectors keyed by word.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    pub dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::Format(format!(
                "vector of length {} in a table of dimension {}",
                vector.len(),
                self.dimension
            )));
        }
        self.entries.insert(word.into(), vector);
        Ok(())
    }

    /// Exact-case lookup, then lowercase.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries
            .get(word)
            .or_else(|| self.entries.get(&word.to_lowercase()))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reads the text embedding format: one `word v1 .. vd` per line, with an
/// optional leading `count dim` header.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    origin: &str,
    vocab_filter: Option<&HashSet<String>>,
) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        if lineno == 1
            && rest.len() == 1
            && word.parse::<usize>().is_ok()
            && rest[0].parse::<usize>().is_ok()
        {
            continue;
        }
        if rest.is_empty() {
            return Err(Error::parse(origin, lineno, "word without a vector"));
        }
        let dim = table.get_or_insert_with(|| EmbeddingTable::new(rest.len())).dimension;
        if rest.len() != dim {
            return Err(Error::parse(
                origin,
                lineno,
                format!("inconsistent dimension: expected {dim}, found {}", rest.len()),
            ));
        }
        if vocab_filter.is_some_and(|f| !f.contains(word) && !f.contains(&word.to_lowercase())) {
            continue;
        }
        let vector = rest
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(origin, lineno, format!("bad number {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        table
            .as_mut()
            .expect("initialized above")
            .entries
            .insert(word.to_string(), vector);
    }
    let table = table.unwrap_or_default();
    if table.is_empty() {
        log::warn!("{origin}: embedding table is empty");
    }
    Ok(table)
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
    vocab_filter: Option<&HashSet<String>>,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(f), &path.display().to_string(), vocab_filter)
}

/// A context-hypothesis pair with its annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub context: String,
    pub hypothesis: String,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    #[serde(default)]
    pub gold: Option<OrdinalLabel>,
    #[serde(default)]
    pub provenance: String,
}

/// Parses JSON-Lines records; blank lines are skipped.
pub fn parse_jsonl<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(origin, i + 1, e.to_string()))
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    read_jsonl(path)
}

pub fn write_pairs(path: impl AsRef<Path>, records: &[PairRecord]) -> Result<()> {
    write_atomic(path, to_jsonl(records)?.as_bytes())
}

/// Writes through a temporary file in the target directory, then renames.
/// Missing parent directories are created.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{file_name}.{}.tmp", std::process::id()));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
