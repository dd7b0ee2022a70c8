//! Deterministic synthetic corpus generator for desk-scale experiments.
//!
//! Documents are short social-media-style texts. The label is determined by
//! the text: a document is positive exactly when it contains a word from
//! one of ten marker-stem families. Roughly 30% of filler tokens come from
//! a distractor vocabulary, and a slice of the positives carry a single
//! occurrence of a rarely used stem, which is what makes a handful of
//! documents genuinely hard and keeps error analysis non-vacuous.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::rng;
use crate::textpipe::Document;

/// The ten marker-stem families; a document is labeled 1 when it contains
/// any surface form listed here.
pub const MARKER_FAMILIES: [&[&str]; 10] = [
    &["troll", "trolls", "trolling", "trolled"],
    &["flame", "flames", "flaming", "flamed"],
    &["spite", "spiteful"],
    &["venom", "venomous"],
    &["taunt", "taunts", "taunting", "taunted"],
    &["smear", "smears", "smearing", "smeared"],
    &["scorn", "scorns", "scornful"],
    &["sneer", "sneers", "sneering", "sneered"],
    &["gripe", "gripes", "griping"],
    &["bile", "snark"],
];

/// Indices of families kept deliberately rare.
const RARE_FAMILIES: [usize; 2] = [8, 9];

const NEUTRAL: [&str; 60] = [
    "people", "time", "year", "day", "thing", "world", "life", "hand", "part", "child", "woman",
    "man", "place", "work", "week", "case", "point", "company", "number", "group", "problem",
    "fact", "idea", "water", "money", "story", "month", "book", "street", "house", "friend",
    "school", "team", "game", "city", "family", "music", "movie", "coffee", "train", "road",
    "photo", "video", "phone", "paper", "plan", "food", "park", "tree", "light", "room", "door",
    "floor", "table", "garden", "river", "market", "ticket", "letter", "window",
];

const DISTRACTORS: [&str; 40] = [
    "quantum", "meadow", "lantern", "crimson", "velvet", "orchard", "pebble", "harbor", "thunder",
    "whisper", "marble", "canyon", "ember", "willow", "falcon", "prism", "nectar", "cobalt",
    "summit", "drift", "hollow", "breeze", "timber", "quartz", "raven", "cedar", "plume", "frost",
    "glacier", "dune", "mosaic", "saffron", "tundra", "fjord", "lagoon", "sphinx", "zephyr",
    "obsidian", "juniper", "sequoia",
];

const HASHTAGS: [&str; 6] = [
    "#CityLife",
    "#GoodMorning",
    "#WeekendPlan",
    "#CoffeeTime",
    "#ParkRun",
    "#BookClub",
];

/// True when any whitespace token of `text` (case-insensitive, trailing
/// punctuation ignored) belongs to a marker family.
pub fn contains_marker(text: &str) -> bool {
    text.split_whitespace().any(|tok| {
        let t: String = tok
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .collect::<String>()
            .to_lowercase();
        MARKER_FAMILIES
            .iter()
            .any(|family| family.contains(&t.as_str()))
    })
}

/// Generates `n` documents with ids 0..n, alternating labels. Fully
/// determined by the seed.
pub fn generate(n: usize, seed: u64) -> Vec<Document> {
    let mut docs = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng::stream(seed, &[rng::tag::SYNTH, i as u64]);
        let label = (i % 2) as u8;
        let mut tokens: Vec<String> = Vec::new();

        let filler = |r: &mut rand_chacha::ChaCha8Rng| -> String {
            if r.gen::<f64>() < 0.3 {
                DISTRACTORS[r.gen_range(0..DISTRACTORS.len())].to_string()
            } else {
                NEUTRAL[r.gen_range(0..NEUTRAL.len())].to_string()
            }
        };

        if label == 1 {
            let borderline = r.gen::<f64>() < 0.25;
            let (n_markers, fill_len) = if borderline {
                (1, r.gen_range(14..=18))
            } else {
                (r.gen_range(3..=5), r.gen_range(8..=14))
            };
            for _ in 0..n_markers {
                let family = if borderline && r.gen::<f64>() < 0.1 {
                    RARE_FAMILIES[r.gen_range(0..RARE_FAMILIES.len())]
                } else {
                    r.gen_range(0..8)
                };
                let forms = MARKER_FAMILIES[family];
                tokens.push(forms[r.gen_range(0..forms.len())].to_string());
            }
            for _ in 0..fill_len {
                tokens.push(filler(&mut r));
            }
        } else {
            let fill_len = r.gen_range(8..=16);
            for _ in 0..fill_len {
                tokens.push(filler(&mut r));
            }
        }

        // Shuffle token order.
        for idx in (1..tokens.len()).rev() {
            let j = r.gen_range(0..=idx);
            tokens.swap(idx, j);
        }

        // Social-media decorations the cleaner is expected to strip.
        if r.gen::<f64>() < 0.2 {
            tokens.insert(0, format!("@user{}", r.gen_range(0..500)));
        }
        if r.gen::<f64>() < 0.15 {
            tokens.push(format!("http://t.example.com/{}", r.gen_range(0..900)));
        }
        if r.gen::<f64>() < 0.15 {
            tokens.push(HASHTAGS[r.gen_range(0..HASHTAGS.len())].to_string());
        }
        let mut text = tokens.join(" ");
        if r.gen::<f64>() < 0.1 {
            text.push_str("...");
        }

        debug_assert_eq!(contains_marker(&text), label == 1);
        docs.push(Document {
            id: i as u64,
            text,
            label,
        });
    }
    docs
}

/// Writes documents as a corpus CSV with header `id,text,label`. Texts are
/// quoted so commas never break the format.
pub fn write_csv(path: &Path, docs: &[Document]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "id,text,label")?;
    for d in docs {
        writeln!(
            f,
            "{},\"{}\",{}",
            d.id,
            d.text.replace('"', "\"\""),
            d.label
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_markers() {
        let docs = generate(200, 5);
        for d in &docs {
            assert_eq!(
                contains_marker(&d.text),
                d.label == 1,
                "doc {}: {}",
                d.id,
                d.text
            );
        }
    }

    #[test]
    fn balanced_and_deterministic() {
        let a = generate(100, 9);
        let b = generate(100, 9);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.text, y.text);
        }
        let pos = a.iter().filter(|d| d.label == 1).count();
        assert_eq!(pos, 50);
    }

    #[test]
    fn survives_cleaning_with_label_signal() {
        use crate::textpipe::{clean, tokenize};
        let docs = generate(60, 3);
        for d in docs.iter().filter(|d| d.label == 1) {
            let cleaned = clean(&d.text);
            let toks = tokenize(&cleaned);
            // After cleaning, positives still carry at least one marker lemma.
            let has = toks.iter().any(|t| {
                MARKER_FAMILIES
                    .iter()
                    .any(|fam| fam.iter().any(|f| crate::textpipe::lemmatize(f) == *t))
            });
            assert!(
                has,
                "cleaned positive lost its marker: {} -> {cleaned}",
                d.text
            );
        }
    }

    #[test]
    fn csv_roundtrips_through_reader() {
        let docs = generate(30, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.csv");
        write_csv(&path, &docs).unwrap();
        let read = crate::textpipe::read_corpus(&path).unwrap();
        assert_eq!(read.len(), docs.len());
        for (a, b) in docs.iter().zip(&read) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.text, b.text);
            assert_eq!(a.label, b.label);
        }
    }
}
