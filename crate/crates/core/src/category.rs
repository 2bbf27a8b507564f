//! Sample partitions and the four data categories they induce.

use serde::{Deserialize, Serialize};

/// Purpose a sample was assigned to when cached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Training,
    Evaluation,
}

/// Whether a person confirmed or overrode the sample's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Supervision {
    Supervised,
    Unsupervised,
}

/// Where a sample came from: a routed call or a sensor submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Call,
    Sensor,
}

/// Data category derived from (split, supervision).
///
/// |            | supervised | unsupervised |
/// |------------|------------|--------------|
/// | evaluation | Gold       | Silver       |
/// | training   | Platinum   | Bronze       |
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Gold,
    Platinum,
    Silver,
    Bronze,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Gold, Category::Platinum, Category::Silver, Category::Bronze];

    pub fn split(self) -> Split {
        match self {
            Category::Gold | Category::Silver => Split::Evaluation,
            Category::Platinum | Category::Bronze => Split::Training,
        }
    }

    pub fn supervision(self) -> Supervision {
        match self {
            Category::Gold | Category::Platinum => Supervision::Supervised,
            Category::Silver | Category::Bronze => Supervision::Unsupervised,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Gold => "gold",
            Category::Platinum => "platinum",
            Category::Silver => "silver",
            Category::Bronze => "bronze",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s))
    }
}

pub fn categorize(split: Split, supervision: Supervision) -> Category {
    match (split, supervision) {
        (Split::Evaluation, Supervision::Supervised) => Category::Gold,
        (Split::Training, Supervision::Supervised) => Category::Platinum,
        (Split::Evaluation, Supervision::Unsupervised) => Category::Silver,
        (Split::Training, Supervision::Unsupervised) => Category::Bronze,
    }
}

/// Sample count per category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub gold: usize,
    pub platinum: usize,
    pub silver: usize,
    pub bronze: usize,
}

impl CategoryCounts {
    pub fn add(&mut self, c: Category) {
        *self.slot(c) += 1;
    }

    pub fn get(&self, c: Category) -> usize {
        match c {
            Category::Gold => self.gold,
            Category::Platinum => self.platinum,
            Category::Silver => self.silver,
            Category::Bronze => self.bronze,
        }
    }

    fn slot(&mut self, c: Category) -> &mut usize {
        match c {
            Category::Gold => &mut self.gold,
            Category::Platinum => &mut self.platinum,
            Category::Silver => &mut self.silver,
            Category::Bronze => &mut self.bronze,
        }
    }

    pub fn total(&self) -> usize {
        self.gold + self.platinum + self.silver + self.bronze
    }
}
