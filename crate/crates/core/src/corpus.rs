//! Bag-of-words corpora: loading, vocabulary filtering, and the word-major
//! transpose the sampler works on.
//!
//! Documents are the observations here and words are the items being
//! clustered, so everything downstream of loading reads the count matrix
//! column by column.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub type DocId = u32;
pub type WordId = u32;

/// Sparse document-word count matrix. Zero counts are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    n_docs: usize,
    n_words: usize,
    counts: BTreeMap<(DocId, WordId), u32>,
}

impl Corpus {
    pub fn new(n_docs: usize, n_words: usize) -> Self {
        Corpus {
            n_docs,
            n_words,
            counts: BTreeMap::new(),
        }
    }

    /// Builds a corpus from `(doc, word, count)` triples. Repeated cells are summed.
    pub fn from_triples(
        n_docs: usize,
        n_words: usize,
        triples: impl IntoIterator<Item = (DocId, WordId, u32)>,
    ) -> Result<Self> {
        let mut corpus = Corpus::new(n_docs, n_words);
        for (doc, word, count) in triples {
            corpus.add(doc, word, count)?;
        }
        Ok(corpus)
    }

    /// Adds `count` occurrences of `word` in `doc`.
    pub fn add(&mut self, doc: DocId, word: WordId, count: u32) -> Result<()> {
        if doc as usize >= self.n_docs || word as usize >= self.n_words {
            return Err(Error::Value(format!(
                "cell ({doc}, {word}) outside {}x{} corpus",
                self.n_docs, self.n_words
            )));
        }
        if count > 0 {
            *self.counts.entry((doc, word)).or_insert(0) += count;
        }
        Ok(())
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    /// Number of stored (nonzero) cells.
    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, doc: DocId, word: WordId) -> u32 {
        self.counts.get(&(doc, word)).copied().unwrap_or(0)
    }

    /// Nonzero cells in (doc, word) order.
    pub fn iter(&self) -> impl Iterator<Item = (DocId, WordId, u32)> + '_ {
        self.counts.iter().map(|(&(d, w), &c)| (d, w, c))
    }

    pub fn total_tokens(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    /// Total corpus count of every word (column sums).
    pub fn word_frequencies(&self) -> Vec<u64> {
        let mut freq = vec![0u64; self.n_words];
        for (&(_, w), &c) in &self.counts {
            freq[w as usize] += u64::from(c);
        }
        freq
    }

    /// Number of documents with no tokens.
    pub fn empty_docs(&self) -> usize {
        let mut seen = vec![false; self.n_docs];
        for &(d, _) in self.counts.keys() {
            seen[d as usize] = true;
        }
        seen.iter().filter(|s| !**s).count()
    }
}

/// Ordered, duplicate-free list of terms; the index of a term is its word id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, WordId>,
}

impl Vocabulary {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i as WordId).is_some() {
                return Err(Error::Value(format!("duplicate vocabulary term {t:?}")));
            }
        }
        Ok(Vocabulary { terms, index })
    }

    /// Placeholder terms `w0`, `w1`, ... for corpora without a vocabulary file.
    pub fn numbered(n: usize) -> Self {
        Self::new((0..n).map(|i| format!("w{i}")).collect()).expect("numbered terms are unique")
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, id: WordId) -> &str {
        &self.terms[id as usize]
    }

    pub fn id(&self, term: &str) -> Option<WordId> {
        self.index.get(term).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    fn intern(&mut self, term: &str) -> WordId {
        if let Some(&id) = self.index.get(term) {
            return id;
        }
        let id = self.terms.len() as WordId;
        self.terms.push(term.to_owned());
        self.index.insert(term.to_owned(), id);
        id
    }
}

/// Loads a UCI bag-of-words `docword` file and its vocabulary.
///
/// The header is the first three integers of the file (D, W, NNZ), either on
/// three lines or one. Every following non-blank line is a 1-indexed
/// `docID wordID count` triple. Line numbers in errors are physical lines.
pub fn load_uci_bow(docword_path: &Path, vocab_path: &Path) -> Result<(Corpus, Vocabulary)> {
    let corpus = load_uci_docword(docword_path)?;
    let vocab = load_vocab(vocab_path)?;
    if vocab.len() != corpus.n_words() {
        return Err(Error::Value(format!(
            "{} has {} terms but docword header declares W = {}",
            vocab_path.display(),
            vocab.len(),
            corpus.n_words()
        )));
    }
    Ok((corpus, vocab))
}

pub fn load_uci_docword(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_uci_docword(BufReader::new(file), path)
}

/// Parses docword content; `path` is only used to label errors.
pub fn parse_uci_docword(reader: impl BufRead, path: &Path) -> Result<Corpus> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_owned(),
        line,
        msg,
    };

    let mut header: Vec<u64> = Vec::with_capacity(3);
    let mut corpus: Option<Corpus> = None;
    let mut declared_nnz = 0u64;
    let mut seen = 0u64;
    let mut last_line = 0usize;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        last_line = lineno;
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }

        let Some(corpus) = corpus.as_mut() else {
            for f in fields {
                if header.len() == 3 {
                    return Err(parse_err(lineno, "trailing tokens after header".into()));
                }
                let v = f
                    .parse::<u64>()
                    .map_err(|_| parse_err(lineno, format!("bad header value {f:?}")))?;
                header.push(v);
            }
            if header.len() == 3 {
                let (d, w) = (header[0] as usize, header[1] as usize);
                if d > DocId::MAX as usize || w > WordId::MAX as usize {
                    return Err(parse_err(lineno, "header dimensions too large".into()));
                }
                declared_nnz = header[2];
                corpus = Some(Corpus::new(d, w));
            }
            continue;
        };

        if fields.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let mut nums = [0i64; 3];
        for (slot, f) in nums.iter_mut().zip(&fields) {
            *slot = f
                .parse::<i64>()
                .map_err(|_| parse_err(lineno, format!("bad integer {f:?}")))?;
        }
        let [doc, word, count] = nums;
        let bounds = |what, value: i64, max: usize| Error::Bounds {
            path: path.to_owned(),
            line: lineno,
            what,
            value: value.max(0) as u64,
            max: max as u64,
        };
        if doc < 1 || doc as usize > corpus.n_docs() {
            return Err(bounds("docID", doc, corpus.n_docs()));
        }
        if word < 1 || word as usize > corpus.n_words() {
            return Err(bounds("wordID", word, corpus.n_words()));
        }
        if count <= 0 || count > i64::from(u32::MAX) {
            return Err(Error::Value(format!(
                "{}: line {lineno}: count must be a positive integer, got {count}",
                path.display()
            )));
        }
        let key = ((doc - 1) as DocId, (word - 1) as WordId);
        if corpus.counts.insert(key, count as u32).is_some() {
            return Err(parse_err(
                lineno,
                format!("duplicate entry for docID {doc} wordID {word}"),
            ));
        }
        seen += 1;
    }

    let corpus = corpus.ok_or_else(|| parse_err(last_line, "incomplete header".into()))?;
    if seen != declared_nnz {
        return Err(parse_err(
            last_line,
            format!("header declares NNZ = {declared_nnz} but {seen} entries were read"),
        ));
    }
    Ok(corpus)
}

/// One term per line; line k is word id k-1.
pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocabulary::new(text.lines().map(|l| l.trim().to_owned()).collect())
}

pub fn write_uci_docword(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(16 * corpus.nnz() + 32);
    out.push_str(&format!(
        "{}\n{}\n{}\n",
        corpus.n_docs(),
        corpus.n_words(),
        corpus.nnz()
    ));
    for (d, w, c) in corpus.iter() {
        out.push_str(&format!("{} {} {}\n", d + 1, w + 1, c));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_vocab(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for t in vocab.terms() {
        writeln!(f, "{t}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Lowercases and splits on anything that is not alphanumeric. No stemming.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Loads every regular file in `dir` as one document, in sorted file-name order.
/// Vocabulary ids follow first occurrence.
pub fn load_text_dir(dir: &Path) -> Result<(Corpus, Vocabulary)> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Error::Value(format!(
            "{} contains no documents",
            dir.display()
        )));
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let mut vocab = Vocabulary::default();
    let mut triples = Vec::new();
    for (doc, path) in files.iter().enumerate() {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8_lossy(&bytes);
        let mut doc_counts: BTreeMap<WordId, u32> = BTreeMap::new();
        for tok in tokenize(&text) {
            *doc_counts.entry(vocab.intern(&tok)).or_insert(0) += 1;
        }
        triples.extend(doc_counts.into_iter().map(|(w, c)| (doc as DocId, w, c)));
    }
    let corpus = Corpus::from_triples(files.len(), vocab.len(), triples)?;
    Ok((corpus, vocab))
}

/// Result of [`filter_vocabulary`].
#[derive(Debug, Clone)]
pub struct Filtered {
    pub corpus: Corpus,
    pub vocab: Vocabulary,
    /// Original id of each retained word, indexed by its new id.
    pub kept: Vec<WordId>,
    /// How many of the requested `keep_next` words were unavailable.
    pub shortfall: usize,
}

/// Drops the `skip_top` most frequent words and keeps the next `keep_next`.
///
/// Frequency is the total corpus count; ties go to the smaller original id.
/// Retained words keep their relative order when ids are compacted, and
/// documents left empty keep their ids so `n_docs` does not change.
pub fn filter_vocabulary(
    corpus: &Corpus,
    vocab: &Vocabulary,
    skip_top: usize,
    keep_next: usize,
) -> Result<Filtered> {
    if keep_next == 0 {
        return Err(Error::Value("keep_next must be at least 1".into()));
    }
    if vocab.len() != corpus.n_words() {
        return Err(Error::Value(format!(
            "vocabulary has {} terms, corpus has {} words",
            vocab.len(),
            corpus.n_words()
        )));
    }
    let freq = corpus.word_frequencies();
    let mut ranked: Vec<WordId> = (0..corpus.n_words() as WordId).collect();
    ranked.sort_by(|&a, &b| freq[b as usize].cmp(&freq[a as usize]).then(a.cmp(&b)));

    let start = skip_top.min(ranked.len());
    let end = skip_top.saturating_add(keep_next).min(ranked.len());
    let mut kept = ranked[start..end].to_vec();
    kept.sort_unstable();
    let shortfall = keep_next - (end - start);

    let mut remap = vec![None; corpus.n_words()];
    for (new, &old) in kept.iter().enumerate() {
        remap[old as usize] = Some(new as WordId);
    }
    let mut out = Corpus::new(corpus.n_docs(), kept.len());
    for (d, w, c) in corpus.iter() {
        if let Some(nw) = remap[w as usize] {
            out.counts.insert((d, nw), c);
        }
    }
    let terms = kept.iter().map(|&w| vocab.term(w).to_owned()).collect();
    Ok(Filtered {
        corpus: out,
        vocab: Vocabulary::new(terms)?,
        kept,
        shortfall,
    })
}

/// Word-major transpose: for each word, its `(doc, count)` list sorted by doc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordView {
    n_docs: usize,
    words: Vec<Vec<(DocId, u32)>>,
    totals: Vec<u64>,
}

impl WordView {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn docs(&self, word: WordId) -> &[(DocId, u32)] {
        &self.words[word as usize]
    }

    /// N_w, the total number of tokens of `word`.
    pub fn tokens(&self, word: WordId) -> u64 {
        self.totals[word as usize]
    }

    /// Words with no tokens are inactive and never sampled.
    pub fn is_active(&self, word: WordId) -> bool {
        self.totals[word as usize] > 0
    }

    pub fn active_words(&self) -> impl Iterator<Item = WordId> + '_ {
        (0..self.words.len() as WordId).filter(|&w| self.is_active(w))
    }

    pub fn total_tokens(&self) -> u64 {
        self.totals.iter().sum()
    }

    /// Transposes back to document-major form.
    pub fn to_corpus(&self) -> Corpus {
        let mut corpus = Corpus::new(self.n_docs, self.words.len());
        for (w, docs) in self.words.iter().enumerate() {
            for &(d, c) in docs {
                corpus.counts.insert((d, w as WordId), c);
            }
        }
        corpus
    }
}

pub fn word_major_view(corpus: &Corpus) -> WordView {
    let mut words = vec![Vec::new(); corpus.n_words()];
    let mut totals = vec![0u64; corpus.n_words()];
    // (doc, word) key order means each word's list is filled in ascending doc order.
    for (d, w, c) in corpus.iter() {
        words[w as usize].push((d, c));
        totals[w as usize] += u64::from(c);
    }
    WordView {
        n_docs: corpus.n_docs(),
        words,
        totals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<Corpus> {
        parse_uci_docword(Cursor::new(text), Path::new("docword.txt"))
    }

    #[test]
    fn uci_single_line_header() {
        let c = parse("2 3 2\n1 1 4\n2 3 1\n").unwrap();
        assert_eq!(c.n_docs(), 2);
        assert_eq!(c.n_words(), 3);
        let cells: Vec<_> = c.iter().collect();
        assert_eq!(cells, vec![(0, 0, 4), (1, 2, 1)]);
    }

    #[test]
    fn uci_three_line_header() {
        let c = parse("2\n3\n2\n1 1 4\n2 3 1\n").unwrap();
        assert_eq!(c.get(0, 0), 4);
        assert_eq!(c.get(1, 2), 1);
        assert_eq!(c.nnz(), 2);
    }

    #[test]
    fn uci_empty_corpus() {
        let c = parse("1 1 0\n").unwrap();
        assert_eq!((c.n_docs(), c.n_words(), c.nnz()), (1, 1, 0));
    }

    #[test]
    fn uci_doc_out_of_range_names_line() {
        let err = parse("2 3 2\n3 1 1\n").unwrap_err();
        match err {
            Error::Bounds { line, what, .. } => {
                assert_eq!(line, 2);
                assert_eq!(what, "docID");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("2\n3\n1\n1 4 1\n").unwrap_err(),
            Error::Bounds { line: 4, what: "wordID", .. }
        ));
    }

    #[test]
    fn uci_rejects_bad_counts_and_lines() {
        assert!(matches!(parse("2 3 1\n1 1 0\n"), Err(Error::Value(_))));
        assert!(matches!(parse("2 3 1\n1 1 -2\n"), Err(Error::Value(_))));
        assert!(matches!(
            parse("2 3 1\n1 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("2 3 1\n1 x 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse("2 3\n"), Err(Error::Parse { .. })));
        // NNZ mismatch
        assert!(matches!(parse("2 3 2\n1 1 1\n"), Err(Error::Parse { .. })));
        // duplicate cell
        assert!(matches!(
            parse("2 3 2\n1 1 1\n1 1 2\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn text_dir_counts() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "a b a").unwrap();
        let (c, v) = load_text_dir(dir.path()).unwrap();
        assert_eq!((c.n_docs(), c.n_words()), (1, 2));
        assert_eq!(c.iter().collect::<Vec<_>>(), vec![(0, 0, 2), (0, 1, 1)]);
        assert_eq!(v.terms(), ["a", "b"]);
    }

    #[test]
    fn text_dir_sorted_files_and_punctuation() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("2.txt"), "X, y!").unwrap();
        fs::write(dir.path().join("1.txt"), "x").unwrap();
        let (c, v) = load_text_dir(dir.path()).unwrap();
        assert_eq!(
            c.iter().collect::<Vec<_>>(),
            vec![(0, 0, 1), (1, 0, 1), (1, 1, 1)]
        );
        assert_eq!(v.terms(), ["x", "y"]);
    }

    #[test]
    fn text_dir_empty_is_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_text_dir(dir.path()), Err(Error::Value(_))));
        assert!(matches!(
            load_text_dir(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn filter_tie_break_prefers_smaller_id() {
        // frequencies (5, 3, 3): rank 0 is word 0, rank 1 is word 1 (tie with word 2)
        let c = Corpus::from_triples(1, 3, [(0, 0, 5), (0, 1, 3), (0, 2, 3)]).unwrap();
        let v = Vocabulary::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let f = filter_vocabulary(&c, &v, 1, 1).unwrap();
        assert_eq!(f.kept, vec![1]);
        assert_eq!(f.vocab.terms(), ["b"]);
        assert_eq!(f.corpus.iter().collect::<Vec<_>>(), vec![(0, 0, 3)]);
        assert_eq!(f.shortfall, 0);
    }

    #[test]
    fn filter_identity_and_shortfall() {
        let c = Corpus::from_triples(3, 4, [(0, 0, 2), (1, 3, 1), (2, 1, 7)]).unwrap();
        let v = Vocabulary::numbered(4);
        let f = filter_vocabulary(&c, &v, 0, 4).unwrap();
        assert_eq!(f.corpus, c);
        assert_eq!(f.vocab, v);

        let f = filter_vocabulary(&c, &v, 2, 5).unwrap();
        assert_eq!(f.kept.len(), 2);
        assert_eq!(f.shortfall, 3);

        assert!(matches!(filter_vocabulary(&c, &v, 0, 0), Err(Error::Value(_))));
    }

    #[test]
    fn filter_keeps_emptied_documents() {
        let c = Corpus::from_triples(2, 2, [(0, 0, 9), (1, 1, 1)]).unwrap();
        let f = filter_vocabulary(&c, &Vocabulary::numbered(2), 1, 1).unwrap();
        assert_eq!(f.corpus.n_docs(), 2);
        assert_eq!(f.corpus.empty_docs(), 1);
        assert_eq!(f.corpus.get(1, 0), 1);
    }

    #[test]
    fn transpose_example() {
        let c = Corpus::from_triples(2, 3, [(0, 0, 4), (1, 2, 1)]).unwrap();
        let view = word_major_view(&c);
        assert_eq!(view.docs(0), &[(0, 4)]);
        assert!(view.docs(1).is_empty());
        assert!(!view.is_active(1));
        assert_eq!(view.docs(2), &[(1, 1)]);
        assert_eq!(view.active_words().collect::<Vec<_>>(), vec![0, 2]);

        let empty = word_major_view(&Corpus::new(3, 2));
        assert!((0..2).all(|w| empty.docs(w).is_empty()));
    }

    fn arb_corpus() -> impl Strategy<Value = Corpus> {
        (1usize..8, 1usize..10).prop_flat_map(|(nd, nw)| {
            proptest::collection::vec((0..nd as u32, 0..nw as u32, 1u32..20), 0..40)
                .prop_map(move |t| Corpus::from_triples(nd, nw, t).unwrap())
        })
    }

    proptest! {
        #[test]
        fn transpose_round_trip_conserves_tokens(c in arb_corpus()) {
            let view = word_major_view(&c);
            prop_assert_eq!(view.total_tokens(), c.total_tokens());
            let freq = c.word_frequencies();
            for w in 0..c.n_words() as WordId {
                prop_assert_eq!(view.tokens(w), freq[w as usize]);
                prop_assert!(view.docs(w).windows(2).all(|p| p[0].0 < p[1].0));
            }
            prop_assert_eq!(view.to_corpus(), c);
        }

        #[test]
        fn uci_write_read_round_trip(c in arb_corpus()) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("docword.txt");
            write_uci_docword(&c, &p).unwrap();
            prop_assert_eq!(load_uci_docword(&p).unwrap(), c);
        }

        #[test]
        fn filter_conserves_and_is_idempotent(c in arb_corpus(), skip in 0usize..4, keep in 1usize..8) {
            let v = Vocabulary::numbered(c.n_words());
            let f = filter_vocabulary(&c, &v, skip, keep).unwrap();
            let freq = c.word_frequencies();
            let expect: u64 = f.kept.iter().map(|&w| freq[w as usize]).sum();
            prop_assert_eq!(f.corpus.total_tokens(), expect);
            prop_assert_eq!(f.corpus.n_docs(), c.n_docs());
            let again = filter_vocabulary(&f.corpus, &f.vocab, 0, f.vocab.len().max(1)).unwrap();
            prop_assert_eq!(&again.corpus, &f.corpus);
            prop_assert_eq!(&again.vocab, &f.vocab);
        }
    }
}
