//! Synthetic corpora with pronoun-style coreference.
//!
//! Each document introduces two or three entities of different classes
//! (male, female, object, group) with a full noun phrase and refers back
//! to them with pronouns, shortened noun phrases or repeated names.
//! Dependency heads follow the usual noun-phrase attachment so that head
//! extraction picks the noun (or the pronoun) of every mention.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, Span, DEFAULT_GENRES, ROOT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Male,
    Female,
    Object,
    Group,
}

const CLASSES: [Class; 4] = [Class::Male, Class::Female, Class::Object, Class::Group];

const MALE_NAMES: &[&str] = &["john", "peter", "david", "mark", "paul", "george"];
const FEMALE_NAMES: &[&str] = &["mary", "anna", "susan", "laura", "emma", "julia"];
const MALE_NOUNS: &[&str] = &["man", "king", "boy", "father"];
const FEMALE_NOUNS: &[&str] = &["woman", "queen", "girl", "mother"];
const OBJECT_NOUNS: &[&str] = &["car", "book", "box", "house", "letter", "phone"];
const GROUP_NOUNS: &[&str] = &["students", "workers", "children", "soldiers"];
const ADJECTIVES: &[&str] = &["old", "young", "tall", "red", "quiet", "famous", "small"];
const CITIES: &[&str] = &["paris", "london", "berlin", "rome", "madrid", "vienna"];
const TRANSITIVE: &[&str] = &["saw", "liked", "found", "helped", "watched", "visited"];
const INTRANSITIVE: &[&str] = &["arrived", "slept", "waited", "stayed"];

impl Class {
    fn nouns(self) -> &'static [&'static str] {
        match self {
            Class::Male => MALE_NOUNS,
            Class::Female => FEMALE_NOUNS,
            Class::Object => OBJECT_NOUNS,
            Class::Group => GROUP_NOUNS,
        }
    }

    fn names(self) -> &'static [&'static str] {
        match self {
            Class::Male => MALE_NAMES,
            Class::Female => FEMALE_NAMES,
            _ => &[],
        }
    }

    fn pronoun(self, subject: bool) -> &'static str {
        match (self, subject) {
            (Class::Male, true) => "he",
            (Class::Male, false) => "him",
            (Class::Female, true) => "she",
            (Class::Female, false) => "her",
            (Class::Object, _) => "it",
            (Class::Group, true) => "they",
            (Class::Group, false) => "them",
        }
    }
}

struct Entity {
    class: Class,
    name: Option<&'static str>,
    noun: &'static str,
    adjective: &'static str,
    mentioned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_docs: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_docs: 20,
            min_sentences: 3,
            max_sentences: 6,
            seed: 7,
        }
    }
}

/// Sentence under construction: words plus dependency heads (local
/// indices, `None` for the root).
#[derive(Default)]
struct Builder {
    words: Vec<String>,
    heads: Vec<Option<usize>>,
}

impl Builder {
    fn push(&mut self, w: &str) -> usize {
        self.words.push(w.to_string());
        self.heads.push(None);
        self.words.len() - 1
    }

    /// Adds a noun phrase; returns (span start, head index).
    fn noun_phrase(&mut self, e: &mut Entity, subject: bool, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let start = self.words.len();
        let first = !e.mentioned;
        e.mentioned = true;
        if first {
            if let Some(n) = e.name {
                let h = self.push(n);
                return (start, h);
            }
            let d = self.push("the");
            let a = self.push(e.adjective);
            let h = self.push(e.noun);
            self.heads[d] = Some(h);
            self.heads[a] = Some(h);
            return (start, h);
        }
        match rng.gen_range(0..10) {
            0..=5 => {
                let h = self.push(e.class.pronoun(subject));
                (start, h)
            }
            6..=7 if e.name.is_some() => {
                let h = self.push(e.name.unwrap());
                (start, h)
            }
            _ => {
                let d = self.push("the");
                let h = self.push(e.noun);
                self.heads[d] = Some(h);
                (start, h)
            }
        }
    }
}

type Mention = (usize, Span);

fn sentence(
    entities: &mut [Entity],
    subj: usize,
    obj: Option<usize>,
    s_idx: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, Vec<i64>, Vec<Mention>) {
    let mut b = Builder::default();
    let mut mentions = Vec::new();
    let city_first = obj.is_some() && rng.gen_bool(0.2);
    let mut fronted = None;
    if city_first {
        let i = b.push("in");
        let c = b.push(CITIES.choose(rng).unwrap());
        let comma = b.push(",");
        b.heads[c] = Some(i);
        fronted = Some((i, comma));
    }
    let (ss, sh) = b.noun_phrase(&mut entities[subj], true, rng);
    mentions.push((subj, Span::new(s_idx, ss, sh)));
    let verb_list = if obj.is_some() { TRANSITIVE } else { INTRANSITIVE };
    let v = b.push(verb_list.choose(rng).unwrap());
    b.heads[sh] = Some(v);
    if let Some((i, comma)) = fronted {
        b.heads[i] = Some(v);
        b.heads[comma] = Some(v);
    }
    if let Some(o) = obj {
        let (os, oh) = b.noun_phrase(&mut entities[o], false, rng);
        b.heads[oh] = Some(v);
        mentions.push((o, Span::new(s_idx, os, oh)));
    }
    if !city_first && rng.gen_bool(0.4) {
        let i = b.push("in");
        let c = b.push(CITIES.choose(rng).unwrap());
        b.heads[i] = Some(v);
        b.heads[c] = Some(i);
    }
    let p = b.push(".");
    b.heads[p] = Some(v);
    let heads = b.heads.iter().map(|h| h.map_or(ROOT, |h| h as i64)).collect();
    (b.words, heads, mentions)
}

/// One synthetic document.
pub fn generate_document(doc_id: &str, num_sentences: usize, rng: &mut ChaCha8Rng) -> Document {
    loop {
        let n_ent = rng.gen_range(2..=3);
        let mut classes = CLASSES.to_vec();
        classes.shuffle(rng);
        let mut entities: Vec<Entity> = classes[..n_ent]
            .iter()
            .map(|&class| Entity {
                class,
                name: if rng.gen_bool(0.5) {
                    class.names().choose(rng).copied()
                } else {
                    None
                },
                noun: class.nouns().choose(rng).unwrap(),
                adjective: ADJECTIVES.choose(rng).unwrap(),
                mentioned: false,
            })
            .collect();

        // plan (subject, object) per sentence; reject plans leaving an
        // entity with fewer than two mentions
        let plan: Vec<(usize, Option<usize>)> = (0..num_sentences)
            .map(|_| {
                let s = rng.gen_range(0..n_ent);
                let o = if rng.gen_bool(0.7) {
                    let o = (s + rng.gen_range(1..n_ent)) % n_ent;
                    Some(o)
                } else {
                    None
                };
                (s, o)
            })
            .collect();
        let mut counts = vec![0; n_ent];
        for &(s, o) in &plan {
            counts[s] += 1;
            if let Some(o) = o {
                counts[o] += 1;
            }
        }
        if counts.iter().any(|&c| c < 2) {
            continue;
        }

        let mut sentences = Vec::new();
        let mut dep_head = Vec::new();
        let mut clusters: Vec<Vec<Span>> = vec![Vec::new(); n_ent];
        for (s_idx, &(s, o)) in plan.iter().enumerate() {
            let (words, heads, mentions) = sentence(&mut entities, s, o, s_idx, rng);
            sentences.push(words);
            dep_head.push(heads);
            for (e, span) in mentions {
                clusters[e].push(span);
            }
        }
        let speakers = sentences
            .iter()
            .map(|s: &Vec<String>| {
                let who = if rng.gen_bool(0.5) { "a" } else { "b" };
                vec![who.to_string(); s.len()]
            })
            .collect();
        return Document {
            doc_id: doc_id.to_string(),
            genre: DEFAULT_GENRES.choose(rng).unwrap().to_string(),
            sentences,
            speakers,
            dep_head,
            clusters,
        };
    }
}

/// A corpus of `cfg.num_docs` documents, deterministic in `cfg.seed`.
pub fn generate_corpus(cfg: &SynthConfig) -> Vec<Document> {
    assert!(cfg.min_sentences >= 1 && cfg.min_sentences <= cfg.max_sentences);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.num_docs)
        .map(|i| {
            let n = rng.gen_range(cfg.min_sentences..=cfg.max_sentences);
            generate_document(&format!("synth_{i:03}"), n, &mut rng)
        })
        .collect()
}
