//! The 13-class word/phrase inventory and the phoneme table behind it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a phoneme is rendered by the formant synthesizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhonemeKind {
    /// Sustained, voiced, full amplitude.
    Vowel,
    /// Sustained, voiced, reduced amplitude (nasals, liquids, glides).
    Sonorant,
    /// Short burst followed by closure.
    Stop,
    /// Sustained, unvoiced, with a noise component.
    Fricative,
    /// Weak aspiration.
    Breathy,
}

/// One entry of the fixed 20-phoneme table.
#[derive(Debug, Clone, Copy)]
pub struct Phoneme {
    pub id: &'static str,
    pub f1: f64,
    pub f2: f64,
    pub kind: PhonemeKind,
}

/// The fixed 20-phoneme inventory with two-formant positions (Hz).
pub const PHONEME_TABLE: [Phoneme; 20] = [
    Phoneme { id: "aa", f1: 730.0, f2: 1090.0, kind: PhonemeKind::Vowel },
    Phoneme { id: "ae", f1: 660.0, f2: 1720.0, kind: PhonemeKind::Vowel },
    Phoneme { id: "ah", f1: 640.0, f2: 1190.0, kind: PhonemeKind::Vowel },
    Phoneme { id: "ao", f1: 570.0, f2: 840.0, kind: PhonemeKind::Vowel },
    Phoneme { id: "eh", f1: 530.0, f2: 1840.0, kind: PhonemeKind::Vowel },
    Phoneme { id: "ee", f1: 270.0, f2: 2290.0, kind: PhonemeKind::Vowel },
    Phoneme { id: "ih", f1: 390.0, f2: 1990.0, kind: PhonemeKind::Vowel },
    Phoneme { id: "oh", f1: 430.0, f2: 1020.0, kind: PhonemeKind::Vowel },
    Phoneme { id: "oo", f1: 300.0, f2: 870.0, kind: PhonemeKind::Vowel },
    Phoneme { id: "uh", f1: 440.0, f2: 1030.0, kind: PhonemeKind::Vowel },
    Phoneme { id: "h", f1: 950.0, f2: 1550.0, kind: PhonemeKind::Breathy },
    Phoneme { id: "k", f1: 1800.0, f2: 2800.0, kind: PhonemeKind::Stop },
    Phoneme { id: "l", f1: 360.0, f2: 1300.0, kind: PhonemeKind::Sonorant },
    Phoneme { id: "m", f1: 250.0, f2: 1150.0, kind: PhonemeKind::Sonorant },
    Phoneme { id: "n", f1: 280.0, f2: 1700.0, kind: PhonemeKind::Sonorant },
    Phoneme { id: "p", f1: 900.0, f2: 2100.0, kind: PhonemeKind::Stop },
    Phoneme { id: "s", f1: 4500.0, f2: 6200.0, kind: PhonemeKind::Fricative },
    Phoneme { id: "t", f1: 3000.0, f2: 4300.0, kind: PhonemeKind::Stop },
    Phoneme { id: "w", f1: 330.0, f2: 700.0, kind: PhonemeKind::Sonorant },
    Phoneme { id: "y", f1: 280.0, f2: 2200.0, kind: PhonemeKind::Sonorant },
];

pub fn phoneme(id: &str) -> Option<&'static Phoneme> {
    PHONEME_TABLE.iter().find(|p| p.id == id)
}

/// One class of the paradigm: a word/phrase (or silence), its transcript and
/// its phoneme rendering, grouped per word so synthesis can insert gaps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub transcript: String,
    pub words: Vec<Vec<String>>,
}

impl ClassSpec {
    fn new(label: &str, transcript: &str, words: &[&[&str]]) -> Self {
        ClassSpec {
            label: label.to_string(),
            transcript: transcript.to_string(),
            words: words
                .iter()
                .map(|w| w.iter().map(|p| p.to_string()).collect())
                .collect(),
        }
    }

    pub fn is_silence(&self) -> bool {
        self.transcript.is_empty()
    }

    /// Flattened phoneme identifier sequence.
    pub fn phoneme_seq(&self) -> Vec<&str> {
        self.words
            .iter()
            .flat_map(|w| w.iter().map(|s| s.as_str()))
            .collect()
    }

    /// Segment count rendered by the synthesizer: one per phoneme plus one
    /// gap between words.
    pub fn segment_count(&self) -> usize {
        let phones: usize = self.words.iter().map(|w| w.len()).sum();
        phones + self.words.len().saturating_sub(1)
    }
}

/// The canonical 13-class table: twelve words/phrases and a silent phase.
pub fn class_table() -> Vec<ClassSpec> {
    vec![
        ClassSpec::new("ambulance", "ambulance", &[&["ae", "m", "p", "y", "uh", "l", "ah", "n", "s"]]),
        ClassSpec::new("clock", "clock", &[&["k", "l", "aa", "k"]]),
        ClassSpec::new("hello", "hello", &[&["h", "eh", "l", "oh"]]),
        ClassSpec::new("help me", "help me", &[&["h", "eh", "l", "p"], &["m", "ee"]]),
        ClassSpec::new("light", "light", &[&["l", "ah", "ee", "t"]]),
        ClassSpec::new("pain", "pain", &[&["p", "eh", "ee", "n"]]),
        ClassSpec::new("stop", "stop", &[&["s", "t", "aa", "p"]]),
        ClassSpec::new("thank you", "thank you", &[&["t", "ae", "n", "k"], &["y", "oo"]]),
        ClassSpec::new("toilet", "toilet", &[&["t", "oh", "ih", "l", "ih", "t"]]),
        ClassSpec::new("tv", "tv", &[&["t", "ee", "w", "ee"]]),
        ClassSpec::new("water", "water", &[&["w", "ao", "t", "ah"]]),
        ClassSpec::new("yes", "yes", &[&["y", "eh", "s"]]),
        ClassSpec::new("silence", "", &[]),
    ]
}

/// Index of a class label in the canonical table.
pub fn class_index(classes: &[ClassSpec], label: &str) -> Result<usize> {
    classes
        .iter()
        .position(|c| c.label == label)
        .ok_or_else(|| Error::invalid(format!("unknown class label '{label}'")))
}
