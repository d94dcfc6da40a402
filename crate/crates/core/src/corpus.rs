//! Documents, validation, and reduction of gold spans to head words.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Genre codes of the OntoNotes English portion.
pub const DEFAULT_GENRES: [&str; 7] = ["bc", "bn", "mz", "nw", "pt", "tc", "wb"];

/// Closed set of genre codes; the index of a code is its feature id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genres(Vec<String>);

impl Default for Genres {
    fn default() -> Self {
        Genres(DEFAULT_GENRES.iter().map(|s| s.to_string()).collect())
    }
}

impl Genres {
    pub fn new<S: Into<String>>(codes: impl IntoIterator<Item = S>) -> Self {
        Genres(codes.into_iter().map(Into::into).collect())
    }

    pub fn index(&self, code: &str) -> Option<usize> {
        self.0.iter().position(|g| g == code)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn codes(&self) -> &[String] {
        &self.0
    }
}

/// Mention span inside one sentence, `end` inclusive. Serialized as the
/// triple `[sentence, start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Span {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(sentence: usize, start: usize, end: usize) -> Self {
        Span {
            sentence,
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn contains(&self, word: usize) -> bool {
        self.start <= word && word <= self.end
    }
}

impl From<[usize; 3]> for Span {
    fn from([sentence, start, end]: [usize; 3]) -> Self {
        Span::new(sentence, start, end)
    }
}

impl From<Span> for [usize; 3] {
    fn from(s: Span) -> Self {
        [s.sentence, s.start, s.end]
    }
}

/// Marker used in `dep_head` for the sentence root.
pub const ROOT: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub doc_id: String,
    pub genre: String,
    pub sentences: Vec<Vec<String>>,
    pub speakers: Vec<Vec<String>>,
    pub dep_head: Vec<Vec<i64>>,
    pub clusters: Vec<Vec<Span>>,
}

impl Document {
    pub fn num_words(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Global index of the first word of every sentence.
    pub fn sentence_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.sentences
            .iter()
            .map(|s| {
                let o = acc;
                acc += s.len();
                o
            })
            .collect()
    }

    pub fn global(&self, sentence: usize, word: usize) -> usize {
        self.sentences[..sentence].iter().map(Vec::len).sum::<usize>() + word
    }

    /// `(sentence, word)` of a global word index.
    pub fn locate(&self, global: usize) -> (usize, usize) {
        let mut rest = global;
        for (s, sent) in self.sentences.iter().enumerate() {
            if rest < sent.len() {
                return (s, rest);
            }
            rest -= sent.len();
        }
        panic!("word {global} beyond document {}", self.doc_id);
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    /// Flattened per-word speaker ids.
    pub fn word_speakers(&self) -> Vec<&str> {
        self.speakers.iter().flatten().map(String::as_str).collect()
    }

    /// Sentence index of every word.
    pub fn word_sentences(&self) -> Vec<usize> {
        self.sentences
            .iter()
            .enumerate()
            .flat_map(|(s, sent)| std::iter::repeat_n(s, sent.len()))
            .collect()
    }

    pub fn validate(&self, genres: &Genres) -> Result<()> {
        let fail = |field: &'static str, message: String| Error::Validation {
            doc_id: self.doc_id.clone(),
            field,
            message,
        };
        if genres.index(&self.genre).is_none() {
            return Err(fail("genre", format!("unknown genre code {:?}", self.genre)));
        }
        let n = self.sentences.len();
        if self.speakers.len() != n {
            return Err(fail(
                "speakers",
                format!("{} speaker rows for {n} sentences", self.speakers.len()),
            ));
        }
        if self.dep_head.len() != n {
            return Err(fail(
                "dep_head",
                format!("{} dep_head rows for {n} sentences", self.dep_head.len()),
            ));
        }
        for (s, sent) in self.sentences.iter().enumerate() {
            let m = sent.len();
            if m == 0 {
                return Err(fail("sentences", format!("sentence {s} is empty")));
            }
            if self.speakers[s].len() != m {
                return Err(fail(
                    "speakers",
                    format!("sentence {s}: {} speakers for {m} words", self.speakers[s].len()),
                ));
            }
            let heads = &self.dep_head[s];
            if heads.len() != m {
                return Err(fail(
                    "dep_head",
                    format!("sentence {s}: {} heads for {m} words", heads.len()),
                ));
            }
            for (w, &h) in heads.iter().enumerate() {
                if h != ROOT && (h < 0 || h as usize >= m || h as usize == w) {
                    return Err(fail(
                        "dep_head",
                        format!("sentence {s} word {w}: head {h} is not ROOT or another word of the sentence"),
                    ));
                }
            }
            if let Some(w) = find_cycle(heads) {
                return Err(fail(
                    "dep_head",
                    format!("sentence {s}: head graph has a cycle through word {w}"),
                ));
            }
        }
        let mut seen = HashSet::new();
        for (c, cluster) in self.clusters.iter().enumerate() {
            if cluster.is_empty() {
                return Err(fail("clusters", format!("cluster {c} is empty")));
            }
            for span in cluster {
                if span.sentence >= n {
                    return Err(fail(
                        "clusters",
                        format!("cluster {c}: span {span:?} names a missing sentence"),
                    ));
                }
                let m = self.sentences[span.sentence].len();
                if span.start > span.end || span.end >= m {
                    return Err(fail(
                        "clusters",
                        format!(
                            "cluster {c}: span {span:?} violates 0 <= start <= end < {m}"
                        ),
                    ));
                }
                if !seen.insert(*span) {
                    return Err(fail(
                        "clusters",
                        format!("span {span:?} appears more than once"),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn find_cycle(heads: &[i64]) -> Option<usize> {
    // 0 = unvisited, 1 = on current path, 2 = done
    let mut state = vec![0u8; heads.len()];
    for start in 0..heads.len() {
        let mut path = Vec::new();
        let mut w = start;
        loop {
            match state[w] {
                2 => break,
                1 => return Some(w),
                _ => {}
            }
            state[w] = 1;
            path.push(w);
            let h = heads[w];
            if h == ROOT {
                break;
            }
            w = h as usize;
        }
        for p in path {
            state[p] = 2;
        }
    }
    None
}

/// Parses and validates a JSONL corpus with the default genre set.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    load_corpus_with(path, &Genres::default())
}

pub fn load_corpus_with(path: &Path, genres: &Genres) -> Result<Vec<Document>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), genres).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_corpus<R: BufRead>(reader: R, genres: &Genres) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        doc.validate(genres)?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Sentence-local index of the syntactic head of `span`: the only word
/// whose parent is outside the span (or ROOT). When there is not exactly
/// one such word, the rightmost word of the span.
pub fn extract_head(span: &Span, doc: &Document) -> usize {
    let heads = &doc.dep_head[span.sentence];
    let mut external = (span.start..=span.end).filter(|&w| {
        let h = heads[w];
        h == ROOT || !span.contains(h as usize)
    });
    match (external.next(), external.next()) {
        (Some(w), None) => w,
        _ => span.end,
    }
}

/// A gold mention dropped or merged while reducing spans to heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadCollision {
    pub head: usize,
    pub kept: Span,
    pub dropped: Span,
    pub same_cluster: bool,
}

/// The word-coreference and word-to-span views of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordLevelDoc {
    pub doc_id: String,
    /// Clusters of global word indices, each sorted, size ≥ 2.
    pub head_clusters: Vec<Vec<usize>>,
    #[serde(with = "head_to_span_serde")]
    pub head_to_span: BTreeMap<usize, Span>,
    #[serde(skip)]
    pub collisions: Vec<HeadCollision>,
}

impl WordLevelDoc {
    /// Cluster index of every word (`None` for words outside clusters).
    pub fn cluster_of(&self, num_words: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; num_words];
        for (c, cluster) in self.head_clusters.iter().enumerate() {
            for &h in cluster {
                out[h] = Some(c);
            }
        }
        out
    }
}

mod head_to_span_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<usize, Span>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<[usize; 4]> = map
            .iter()
            .map(|(&h, sp)| [h, sp.sentence, sp.start, sp.end])
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<usize, Span>, D::Error> {
        let rows: Vec<[usize; 4]> = Vec::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|[h, s, a, b]| (h, Span::new(s, a, b)))
            .collect())
    }
}

/// Reduces every gold span to its head word.
///
/// Two mentions with the same head: inside one cluster the longer span is
/// kept; across clusters the mention of the earlier-listed cluster wins.
/// Both cases are logged and recorded in `collisions`.
pub fn to_word_level(doc: &Document) -> WordLevelDoc {
    // head -> (cluster, span)
    let mut owner: HashMap<usize, (usize, Span)> = HashMap::new();
    let mut collisions = Vec::new();
    for (c, cluster) in doc.clusters.iter().enumerate() {
        for span in cluster {
            let head = doc.global(span.sentence, extract_head(span, doc));
            match owner.get_mut(&head) {
                None => {
                    owner.insert(head, (c, *span));
                }
                Some((oc, kept)) if *oc == c => {
                    let (keep, drop) = if span.len() > kept.len() {
                        (*span, *kept)
                    } else {
                        (*kept, *span)
                    };
                    *kept = keep;
                    warn!(
                        "{}: spans {keep:?} and {drop:?} share head {head}; keeping the longer",
                        doc.doc_id
                    );
                    collisions.push(HeadCollision {
                        head,
                        kept: keep,
                        dropped: drop,
                        same_cluster: true,
                    });
                }
                Some((_, kept)) => {
                    warn!(
                        "{}: span {span:?} shares head {head} with {kept:?} of an earlier cluster; dropped",
                        doc.doc_id
                    );
                    collisions.push(HeadCollision {
                        head,
                        kept: *kept,
                        dropped: *span,
                        same_cluster: false,
                    });
                }
            }
        }
    }

    let mut by_cluster: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&head, &(c, _)) in &owner {
        by_cluster.entry(c).or_default().push(head);
    }
    let mut head_clusters = Vec::new();
    let mut head_to_span = BTreeMap::new();
    for (_, mut heads) in by_cluster {
        if heads.len() < 2 {
            continue;
        }
        heads.sort_unstable();
        for &h in &heads {
            head_to_span.insert(h, owner[&h].1);
        }
        head_clusters.push(heads);
    }
    WordLevelDoc {
        doc_id: doc.doc_id.clone(),
        head_clusters,
        head_to_span,
        collisions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(sentences: &[&[&str]], heads: &[&[i64]], clusters: Vec<Vec<Span>>) -> Document {
        Document {
            doc_id: "d".into(),
            genre: "nw".into(),
            sentences: sentences
                .iter()
                .map(|s| s.iter().map(|w| w.to_string()).collect())
                .collect(),
            speakers: sentences
                .iter()
                .map(|s| vec!["a".to_string(); s.len()])
                .collect(),
            dep_head: heads.iter().map(|h| h.to_vec()).collect(),
            clusters,
        }
    }

    // words:      0    1    2    3    4    5    6    7    8    9
    const WORDS: &[&str] = &["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];

    #[test]
    fn single_word_span_is_its_own_head() {
        let d = doc(&[WORDS], &[&[-1, 0, 0, 0, 0, 0, 0, 0, 0, 0]], vec![]);
        assert_eq!(extract_head(&Span::new(0, 3, 3), &d), 3);
    }

    #[test]
    fn unique_external_word_is_head() {
        // 3->4, 4->1 (outside), 5->4
        let d = doc(&[WORDS], &[&[-1, 0, 0, 4, 1, 4, 0, 0, 0, 0]], vec![]);
        assert_eq!(extract_head(&Span::new(0, 3, 5), &d), 4);
    }

    #[test]
    fn two_external_words_fall_back_to_rightmost_of_span() {
        // 2->0 (outside), 3->7 (outside), 4->2
        let d = doc(&[WORDS], &[&[-1, 0, 0, 7, 2, 0, 0, 0, 0, 0]], vec![]);
        assert_eq!(extract_head(&Span::new(0, 2, 4), &d), 4);
    }

    #[test]
    fn root_inside_span_counts_as_external() {
        let d = doc(&[&["x", "y", "z"]], &[&[1, -1, 1]], vec![]);
        assert_eq!(extract_head(&Span::new(0, 0, 2), &d), 1);
    }

    #[test]
    fn empty_clusters_give_empty_word_level_doc() {
        let d = doc(&[&["x"]], &[&[-1]], vec![]);
        let wl = to_word_level(&d);
        assert!(wl.head_clusters.is_empty());
        assert!(wl.head_to_span.is_empty());
    }

    #[test]
    fn clusters_map_to_global_heads() {
        let d = doc(
            &[&["p", "q"], WORDS],
            &[&[-1, 0], &[-1, 0, 0, 4, 1, 4, 0, 0, 0, 0]],
            vec![vec![Span::new(1, 3, 5), Span::new(1, 8, 8)]],
        );
        let wl = to_word_level(&d);
        assert_eq!(wl.head_clusters, vec![vec![6, 10]]);
        assert_eq!(wl.head_to_span[&6], Span::new(1, 3, 5));
        assert_eq!(wl.head_to_span[&10], Span::new(1, 8, 8));
    }

    #[test]
    fn same_cluster_collision_keeps_longer_span() {
        // head of (3,5) and (4,4) is 4
        let d = doc(
            &[WORDS],
            &[&[-1, 0, 0, 4, 1, 4, 0, 0, 0, 0]],
            vec![vec![Span::new(0, 4, 4), Span::new(0, 3, 5), Span::new(0, 8, 8)]],
        );
        let wl = to_word_level(&d);
        assert_eq!(wl.head_clusters, vec![vec![4, 8]]);
        assert_eq!(wl.head_to_span[&4], Span::new(0, 3, 5));
        assert_eq!(wl.collisions.len(), 1);
        assert!(wl.collisions[0].same_cluster);
    }

    #[test]
    fn cross_cluster_collision_keeps_first_cluster() {
        let d = doc(
            &[WORDS],
            &[&[-1, 0, 0, 4, 1, 4, 0, 0, 0, 0]],
            vec![
                vec![Span::new(0, 3, 5), Span::new(0, 8, 8)],
                vec![Span::new(0, 4, 4), Span::new(0, 6, 6), Span::new(0, 9, 9)],
            ],
        );
        let wl = to_word_level(&d);
        assert_eq!(wl.head_clusters, vec![vec![4, 8], vec![6, 9]]);
        assert!(!wl.collisions[0].same_cluster);
    }

    #[test]
    fn validation_rejects_reversed_span() {
        let d = doc(&[&["x", "y"]], &[&[-1, 0]], vec![vec![Span::new(0, 1, 0)]]);
        let err = d.validate(&Genres::default()).unwrap_err();
        assert!(matches!(err, Error::Validation { field: "clusters", .. }), "{err}");
    }

    #[test]
    fn validation_rejects_cycles_and_bad_heads() {
        let d = doc(&[&["x", "y", "z"]], &[&[1, 2, 0]], vec![]);
        assert!(d.validate(&Genres::default()).unwrap_err().to_string().contains("cycle"));
        let d = doc(&[&["x", "y"]], &[&[-1, 5]], vec![]);
        assert!(d.validate(&Genres::default()).is_err());
        let d = doc(&[&["x", "y"]], &[&[-1, 1]], vec![]);
        assert!(d.validate(&Genres::default()).is_err());
    }

    #[test]
    fn validation_rejects_unknown_genre_and_misaligned_speakers() {
        let mut d = doc(&[&["x"]], &[&[-1]], vec![]);
        d.genre = "zz".into();
        assert!(d.validate(&Genres::default()).is_err());
        let mut d = doc(&[&["x"]], &[&[-1]], vec![]);
        d.speakers[0].push("b".into());
        assert!(d.validate(&Genres::default()).is_err());
    }

    #[test]
    fn parse_empty_and_minimal() {
        let docs = parse_corpus(&b""[..], &Genres::default()).unwrap();
        assert!(docs.is_empty());
        let line = r#"{"doc_id":"x","genre":"nw","sentences":[["Hi","there"]],"speakers":[["a","a"]],"dep_head":[[1,-1]],"clusters":[]}"#;
        let docs = parse_corpus(line.as_bytes(), &Genres::default()).unwrap();
        assert_eq!(docs.len(), 1);
        assert!(docs[0].clusters.is_empty());
    }

    #[test]
    fn parse_error_carries_line_number() {
        let text = "\n{\"doc_id\": 3}\n";
        match parse_corpus(text.as_bytes(), &Genres::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let line = r#"{"doc_id":"x","genre":"nw","sentences":[["a"]],"speakers":[["a"]],"dep_head":[[-1]],"clusters":[],"extra":1}"#;
        assert!(matches!(
            parse_corpus(line.as_bytes(), &Genres::default()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn locate_inverts_global() {
        let d = doc(&[&["a", "b"], &["c"], &["d", "e", "f"]], &[&[-1, 0], &[-1], &[-1, 0, 0]], vec![]);
        for g in 0..d.num_words() {
            let (s, w) = d.locate(g);
            assert_eq!(d.global(s, w), g);
        }
        assert_eq!(d.word_sentences(), vec![0, 0, 1, 2, 2, 2]);
    }
}
