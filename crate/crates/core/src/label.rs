//! Emotion and group-class label algebra.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete facial expression carried by a face asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Fear,
    Disgust,
    Sadness,
    Happiness,
    Surprise,
    Neutral,
}

impl Emotion {
    pub const ALL: [Emotion; 7] = [
        Emotion::Anger,
        Emotion::Fear,
        Emotion::Disgust,
        Emotion::Sadness,
        Emotion::Happiness,
        Emotion::Surprise,
        Emotion::Neutral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Fear => "fear",
            Emotion::Disgust => "disgust",
            Emotion::Sadness => "sadness",
            Emotion::Happiness => "happiness",
            Emotion::Surprise => "surprise",
            Emotion::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Emotion::ALL
            .into_iter()
            .find(|e| e.name() == lower)
            .ok_or_else(|| Error::UnknownEmotion(s.to_string()))
    }
}

/// Scene- or video-level valence class.
///
/// The integer encoding `Negative=0, Neutral=1, Positive=2` is used in every
/// binary context and in score vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupClass {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

impl GroupClass {
    pub const ALL: [GroupClass; 3] = [GroupClass::Negative, GroupClass::Neutral, GroupClass::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<GroupClass> {
        GroupClass::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupClass::Negative => "negative",
            GroupClass::Neutral => "neutral",
            GroupClass::Positive => "positive",
        }
    }
}

impl fmt::Display for GroupClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupClass {
    type Err = Error;

    /// Accepts the lowercase names (case-insensitive) or the integer encoding.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Ok(i) = t.parse::<usize>() {
            return GroupClass::from_index(i).ok_or_else(|| Error::UnknownGroupClass(s.to_string()));
        }
        let lower = t.to_ascii_lowercase();
        GroupClass::ALL
            .into_iter()
            .find(|c| c.name() == lower)
            .ok_or_else(|| Error::UnknownGroupClass(s.to_string()))
    }
}

/// How surprise faces take part in generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurprisePolicy {
    Negative,
    Neutral,
    Positive,
    /// Surprise assets are never sampled.
    Exclude,
}

impl Default for SurprisePolicy {
    fn default() -> Self {
        SurprisePolicy::Neutral
    }
}

/// Emotion to group-class mapping with a configurable destination for surprise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelRule {
    pub surprise: SurprisePolicy,
}

impl LabelRule {
    pub fn new(surprise: SurprisePolicy) -> Self {
        LabelRule { surprise }
    }

    /// Whether assets with this emotion may be placed in a scene.
    pub fn permits(&self, e: Emotion) -> bool {
        !(e == Emotion::Surprise && self.surprise == SurprisePolicy::Exclude)
    }

    pub fn class_of(&self, e: Emotion) -> GroupClass {
        match e {
            Emotion::Anger | Emotion::Fear | Emotion::Disgust | Emotion::Sadness => GroupClass::Negative,
            Emotion::Happiness => GroupClass::Positive,
            Emotion::Neutral => GroupClass::Neutral,
            // An excluded surprise never reaches a histogram; Neutral keeps the map total.
            Emotion::Surprise => match self.surprise {
                SurprisePolicy::Negative => GroupClass::Negative,
                SurprisePolicy::Positive => GroupClass::Positive,
                SurprisePolicy::Neutral | SurprisePolicy::Exclude => GroupClass::Neutral,
            },
        }
    }

    pub fn histogram<I: IntoIterator<Item = Emotion>>(&self, emotions: I) -> LabelHistogram {
        let mut h = LabelHistogram::default();
        for e in emotions {
            h.add(self.class_of(e));
        }
        h
    }
}

/// Maps an emotion to its group class with surprise sent to Neutral.
pub fn map_emotion_to_class(e: Emotion) -> GroupClass {
    LabelRule::default().class_of(e)
}

/// Face counts per group class for one scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelHistogram {
    pub counts: [u32; 3],
}

impl LabelHistogram {
    pub fn new(negative: u32, neutral: u32, positive: u32) -> Self {
        LabelHistogram {
            counts: [negative, neutral, positive],
        }
    }

    pub fn add(&mut self, c: GroupClass) {
        self.counts[c.index()] += 1;
    }

    pub fn get(&self, c: GroupClass) -> u32 {
        self.counts[c.index()]
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// The class with a strict maximum count, or Neutral when the maximum is shared.
    pub fn group_label(&self) -> Result<GroupClass> {
        if self.total() == 0 {
            return Err(Error::EmptyHistogram);
        }
        let max = *self.counts.iter().max().unwrap();
        let mut leaders = GroupClass::ALL.into_iter().filter(|c| self.get(*c) == max);
        let first = leaders.next().unwrap();
        if leaders.next().is_some() {
            Ok(GroupClass::Neutral)
        } else {
            Ok(first)
        }
    }
}

pub fn compute_group_label(h: &LabelHistogram) -> Result<GroupClass> {
    h.group_label()
}
