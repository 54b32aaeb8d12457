//! Explicit-feedback rating data: the sparse user × item matrix, its
//! summary statistics, MovieLens ingestion and the profile detector that
//! gates which profiles may be used for training.

mod movielens;
mod robdet;
mod snapshot;

pub use movielens::{parse_movielens, write_movielens};
pub use robdet::{
    robdet_filter, AcceptAll, DetectorConfig, DeviationDetector, ProfileDetector, ProfileScore,
    RobDetVerdict,
};
pub use snapshot::{read_snapshot, write_snapshot};

use thiserror::Error;

/// Default top of the rating scale (five stars).
pub const DEFAULT_R_MAX: u8 = 5;

#[derive(Debug, Error)]
pub enum RatingsError {
    #[error("line {line}: malformed rating line: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: rating {rating} outside 1..={r_max}")]
    OutOfRange { line: usize, rating: i64, r_max: u8 },
    #[error("line {line}: duplicate rating for user {user}, item {item}")]
    Duplicate { line: usize, user: u32, item: u32 },
    #[error("no ratings")]
    Empty,
    #[error("index out of bounds: user {user}, item {item}")]
    OutOfBounds { user: u32, item: u32 },
    #[error("unknown detector '{0}'")]
    UnknownDetector(String),
    #[error("invalid detector configuration: {0}")]
    InvalidDetectorConfig(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One stored rating. `user` and `item` are dense internal indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub value: u8,
}

/// Sparse rating matrix with rows stored contiguously per user.
///
/// Zero means "unrated" and is never stored. The original dataset ids are
/// kept in `user_ids` / `item_ids`, indexed by the internal index.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    num_users: u32,
    num_items: u32,
    r_max: u8,
    entries: Vec<Rating>,
    row_start: Vec<usize>,
    user_ids: Vec<u32>,
    item_ids: Vec<u32>,
}

impl RatingMatrix {
    /// Builds a matrix over `num_users × num_items` with identity id maps.
    pub fn from_entries<I>(
        num_users: u32,
        num_items: u32,
        r_max: u8,
        entries: I,
    ) -> Result<Self, RatingsError>
    where
        I: IntoIterator<Item = (u32, u32, u8)>,
    {
        Self::with_ids(
            (0..num_users).collect(),
            (0..num_items).collect(),
            r_max,
            entries,
        )
    }

    /// Builds a matrix with explicit original ids. Line numbers in errors are
    /// the 1-based position in `entries`.
    pub fn with_ids<I>(
        user_ids: Vec<u32>,
        item_ids: Vec<u32>,
        r_max: u8,
        entries: I,
    ) -> Result<Self, RatingsError>
    where
        I: IntoIterator<Item = (u32, u32, u8)>,
    {
        let num_users = user_ids.len() as u32;
        let num_items = item_ids.len() as u32;
        let mut tagged = Vec::new();
        for (pos, (user, item, value)) in entries.into_iter().enumerate() {
            if user >= num_users || item >= num_items {
                return Err(RatingsError::OutOfBounds { user, item });
            }
            if value == 0 || value > r_max {
                return Err(RatingsError::OutOfRange {
                    line: pos + 1,
                    rating: value as i64,
                    r_max,
                });
            }
            tagged.push((Rating { user, item, value }, pos + 1));
        }
        tagged.sort_by_key(|(r, line)| (r.user, r.item, *line));
        for pair in tagged.windows(2) {
            let (a, b) = (&pair[0].0, &pair[1].0);
            if a.user == b.user && a.item == b.item {
                return Err(RatingsError::Duplicate {
                    line: pair[1].1,
                    user: user_ids[b.user as usize],
                    item: item_ids[b.item as usize],
                });
            }
        }
        let entries: Vec<Rating> = tagged.into_iter().map(|(r, _)| r).collect();
        let mut row_start = vec![0usize; num_users as usize + 1];
        for r in &entries {
            row_start[r.user as usize + 1] += 1;
        }
        for u in 0..num_users as usize {
            row_start[u + 1] += row_start[u];
        }
        Ok(Self {
            num_users,
            num_items,
            r_max,
            entries,
            row_start,
            user_ids,
            item_ids,
        })
    }

    pub fn num_users(&self) -> u32 {
        self.num_users
    }

    pub fn num_items(&self) -> u32 {
        self.num_items
    }

    pub fn r_max(&self) -> u8 {
        self.r_max
    }

    /// Number of stored ratings, `|R|`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All ratings ordered by (user, item).
    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    /// The ratings of one user, ordered by item.
    pub fn user_ratings(&self, user: u32) -> &[Rating] {
        let u = user as usize;
        &self.entries[self.row_start[u]..self.row_start[u + 1]]
    }

    pub fn get(&self, user: u32, item: u32) -> Option<u8> {
        if user >= self.num_users {
            return None;
        }
        let row = self.user_ratings(user);
        row.binary_search_by_key(&item, |r| r.item)
            .ok()
            .map(|i| row[i].value)
    }

    /// Dense rating vector of `user` (zero for unrated items).
    pub fn dense_row(&self, user: u32) -> Vec<u8> {
        let mut row = vec![0u8; self.num_items as usize];
        for r in self.user_ratings(user) {
            row[r.item as usize] = r.value;
        }
        row
    }

    pub fn user_ids(&self) -> &[u32] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[u32] {
        &self.item_ids
    }

    /// Keeps only the users whose verdict bit is set. Users are renumbered
    /// densely; the item space is unchanged.
    pub fn restrict_users(&self, verdict: &RobDetVerdict) -> RatingMatrix {
        let mut new_index = vec![u32::MAX; self.num_users as usize];
        let mut user_ids = Vec::new();
        for u in 0..self.num_users {
            if verdict.accepted(u) {
                new_index[u as usize] = user_ids.len() as u32;
                user_ids.push(self.user_ids[u as usize]);
            }
        }
        let entries = self
            .entries
            .iter()
            .filter(|r| new_index[r.user as usize] != u32::MAX)
            .map(|r| (new_index[r.user as usize], r.item, r.value));
        RatingMatrix::with_ids(user_ids, self.item_ids.clone(), self.r_max, entries)
            .expect("subset of a valid matrix is valid")
    }
}

/// Global, per-user and per-item averages of a rating matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingStats {
    pub rating_sum: u64,
    pub rating_count: u64,
    pub global_mean: f64,
    pub user_mean: Vec<f64>,
    pub item_mean: Vec<f64>,
    pub user_count: Vec<u32>,
    pub item_count: Vec<u32>,
}

impl RatingStats {
    pub fn user_bias(&self, user: u32) -> f64 {
        self.user_mean[user as usize] - self.global_mean
    }

    pub fn item_bias(&self, item: u32) -> f64 {
        self.item_mean[item as usize] - self.global_mean
    }
}

/// Users or items without any rating get the global mean, so their bias is 0.
pub fn compute_stats(matrix: &RatingMatrix) -> Result<RatingStats, RatingsError> {
    if matrix.is_empty() {
        return Err(RatingsError::Empty);
    }
    let nu = matrix.num_users() as usize;
    let ni = matrix.num_items() as usize;
    let mut user_sum = vec![0u64; nu];
    let mut user_count = vec![0u32; nu];
    let mut item_sum = vec![0u64; ni];
    let mut item_count = vec![0u32; ni];
    let mut total = 0u64;
    for r in matrix.entries() {
        user_sum[r.user as usize] += r.value as u64;
        user_count[r.user as usize] += 1;
        item_sum[r.item as usize] += r.value as u64;
        item_count[r.item as usize] += 1;
        total += r.value as u64;
    }
    let count = matrix.len() as u64;
    let mu = total as f64 / count as f64;
    let mean = |s: u64, c: u32| if c == 0 { mu } else { s as f64 / c as f64 };
    Ok(RatingStats {
        rating_sum: total,
        rating_count: count,
        global_mean: mu,
        user_mean: user_sum.iter().zip(&user_count).map(|(&s, &c)| mean(s, c)).collect(),
        item_mean: item_sum.iter().zip(&item_count).map(|(&s, &c)| mean(s, c)).collect(),
        user_count,
        item_count,
    })
}
