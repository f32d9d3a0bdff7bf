//! Interaction logs, the user-level split, and the binary item-user matrix.
//!
//! Input lines are `user<TAB>item<TAB>timestamp`; a comma works as the
//! delimiter too. Users are split into train/validation/test cohorts, and only
//! training users contribute columns to the rating matrix. Validation and test
//! users are scored inductively from their own event sequences.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed used for the user split unless overridden.
pub const DEFAULT_SPLIT_SEED: u64 = 9876;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: u64,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, timestamp: u64) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            timestamp,
        }
    }
}

/// Result of parsing an interaction file.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub interactions: Vec<Interaction>,
    pub malformed: usize,
    /// 1-based line number of the first malformed line.
    pub first_malformed: Option<usize>,
}

fn parse_line(line: &str) -> Option<Interaction> {
    let delim = if line.contains('\t') { '\t' } else { ',' };
    let mut fields = line.split(delim).map(str::trim);
    let user = fields.next().filter(|s| !s.is_empty())?;
    let item = fields.next().filter(|s| !s.is_empty())?;
    let timestamp = fields.next()?.parse::<u64>().ok()?;
    if fields.next().is_some() {
        return None;
    }
    Some(Interaction::new(user, item, timestamp))
}

/// Parses interactions from any buffered reader. Blank lines are ignored.
///
/// With `strict`, the first malformed line aborts the parse.
pub fn parse_interactions<R: BufRead>(reader: R, strict: bool) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Some(it) => report.interactions.push(it),
            None => {
                if strict {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("expected user, item, timestamp; got {line:?}"),
                    });
                }
                report.malformed += 1;
                report.first_malformed.get_or_insert(idx + 1);
            }
        }
    }
    Ok(report)
}

pub fn load_interactions(path: impl AsRef<Path>, strict: bool) -> Result<LoadReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let report = parse_interactions(BufReader::new(file), strict)?;
    if report.malformed > 0 {
        log::warn!(
            "{}: skipped {} malformed line(s), first at line {}",
            path.display(),
            report.malformed,
            report.first_malformed.unwrap_or(0)
        );
    }
    Ok(report)
}

/// Dataset-specific activity filters. Zero disables a filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub min_user_events: usize,
    pub min_item_users: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStats {
    pub dropped_users: usize,
    pub dropped_items: usize,
    pub dropped_events: usize,
}

/// Keeps events whose user has at least `min_user_events` records and whose
/// item was touched by at least `min_item_users` distinct users. Both counts
/// are taken on the unfiltered log.
pub fn prune(log: &[Interaction], config: PruneConfig) -> (Vec<Interaction>, PruneStats) {
    let mut user_events: HashMap<&str, usize> = HashMap::new();
    let mut item_users: HashMap<&str, HashSet<&str>> = HashMap::new();
    for it in log {
        *user_events.entry(&it.user).or_default() += 1;
        item_users.entry(&it.item).or_default().insert(&it.user);
    }
    let keep_user = |u: &str| user_events[u] >= config.min_user_events;
    let keep_item = |i: &str| item_users[i].len() >= config.min_item_users;

    let kept: Vec<Interaction> = log
        .iter()
        .filter(|it| keep_user(&it.user) && keep_item(&it.item))
        .cloned()
        .collect();
    let stats = PruneStats {
        dropped_users: user_events.keys().filter(|u| !keep_user(u)).count(),
        dropped_items: item_users.keys().filter(|i| !keep_item(i)).count(),
        dropped_events: log.len() - kept.len(),
    };
    (kept, stats)
}

/// Relative cohort sizes for train/validation/test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 8,
            val: 1,
            test: 1,
        }
    }
}

/// Dense mapping between item ids and matrix rows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl ItemIndex {
    pub fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(ids.len());
        for (row, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), row).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate item id {id:?}")));
            }
        }
        Ok(Self { ids, lookup })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, item: &str) -> Option<usize> {
        self.lookup.get(item).copied()
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// A user-level partition of an interaction log.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train_users: Vec<String>,
    pub val_users: Vec<String>,
    pub test_users: Vec<String>,
    /// Items seen in training users' events, in order of first appearance.
    pub item_index: ItemIndex,
    /// Training user to matrix column.
    pub user_index: HashMap<String, usize>,
    pub ratios: SplitRatios,
    pub seed: u64,
}

fn distinct_users(log: &[Interaction]) -> Vec<String> {
    let mut seen = HashSet::new();
    log.iter()
        .filter(|it| seen.insert(it.user.as_str()))
        .map(|it| it.user.clone())
        .collect()
}

fn cohort_sizes(total: usize, ratios: SplitRatios) -> (usize, usize, usize) {
    let sum = (ratios.train + ratios.val + ratios.test) as f64;
    let val = ((total as f64 * ratios.val as f64 / sum).round() as usize).max(1);
    let test = ((total as f64 * ratios.test as f64 / sum).round() as usize).max(1);
    (total - val - test, val, test)
}

/// Shuffles distinct users with a seeded RNG and partitions them by `ratios`.
pub fn split_users(log: &[Interaction], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    if ratios.train == 0 || ratios.val == 0 || ratios.test == 0 {
        return Err(Error::Split("all split ratios must be positive".into()));
    }
    let mut users = distinct_users(log);
    if users.len() < 3 {
        return Err(Error::Split(format!(
            "need at least 3 users, found {}",
            users.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);

    let (n_train, n_val, _) = cohort_sizes(users.len(), ratios);
    let test_users = users.split_off(n_train + n_val);
    let val_users = users.split_off(n_train);
    let train_users = users;
    DatasetSplit::from_cohorts(log, train_users, val_users, test_users, ratios, seed)
}

impl DatasetSplit {
    /// Builds a split from explicit cohorts, e.g. one read back from a manifest.
    pub fn from_cohorts(
        log: &[Interaction],
        train_users: Vec<String>,
        val_users: Vec<String>,
        test_users: Vec<String>,
        ratios: SplitRatios,
        seed: u64,
    ) -> Result<Self> {
        let user_index: HashMap<String, usize> = train_users
            .iter()
            .enumerate()
            .map(|(col, u)| (u.clone(), col))
            .collect();
        let others: HashSet<&str> = val_users
            .iter()
            .chain(&test_users)
            .map(String::as_str)
            .collect();
        if others.len() != val_users.len() + test_users.len()
            || user_index.len() != train_users.len()
            || others.iter().any(|u| user_index.contains_key(*u))
        {
            return Err(Error::Split("user cohorts are not disjoint".into()));
        }

        let mut seen = HashSet::new();
        let item_ids: Vec<String> = log
            .iter()
            .filter(|it| user_index.contains_key(&it.user))
            .filter(|it| seen.insert(it.item.as_str()))
            .map(|it| it.item.clone())
            .collect();

        Ok(Self {
            train_users,
            val_users,
            test_users,
            item_index: ItemIndex::from_ids(item_ids)?,
            user_index,
            ratios,
            seed,
        })
    }

    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            seed: self.seed,
            ratios: self.ratios,
            train_users: self.train_users.clone(),
            val_users: self.val_users.clone(),
            test_users: self.test_users.clone(),
        }
    }
}

/// Serialized form of a split, enough to rebuild it from the same log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub train_users: Vec<String>,
    pub val_users: Vec<String>,
    pub test_users: Vec<String>,
}

impl SplitManifest {
    pub fn into_split(self, log: &[Interaction]) -> Result<DatasetSplit> {
        DatasetSplit::from_cohorts(
            log,
            self.train_users,
            self.val_users,
            self.test_users,
            self.ratios,
            self.seed,
        )
    }
}

/// Sparse binary item-user incidence matrix. Every stored entry is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    n: usize,
    m: usize,
    /// Users of each item row.
    rows: Vec<Vec<usize>>,
    /// Items of each user column.
    cols: Vec<Vec<usize>>,
}

impl RatingMatrix {
    /// Builds from `(item_row, user_col)` pairs; duplicates collapse.
    pub fn from_pairs(
        n: usize,
        m: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let entries: BTreeSet<(usize, usize)> = pairs.into_iter().collect();
        let mut rows = vec![Vec::new(); n];
        let mut cols = vec![Vec::new(); m];
        for (i, j) in entries {
            if i >= n || j >= m {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i}, {j}) outside {n}x{m}"
                )));
            }
            rows[i].push(j);
            cols[j].push(i);
        }
        for c in &mut cols {
            c.sort_unstable();
        }
        Ok(Self { n, m, rows, cols })
    }

    /// Builds from a dense 0/1 row-major table (test fixtures).
    pub fn from_dense(table: &[Vec<u8>]) -> Result<Self> {
        let n = table.len();
        let m = table.first().map_or(0, Vec::len);
        let mut pairs = Vec::new();
        for (i, row) in table.iter().enumerate() {
            if row.len() != m {
                return Err(Error::dim(m, row.len()));
            }
            pairs.extend(row.iter().enumerate().filter(|(_, &v)| v != 0).map(|(j, _)| (i, j)));
        }
        Self::from_pairs(n, m, pairs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, item: usize) -> &[usize] {
        &self.rows[item]
    }

    pub fn col(&self, user: usize) -> &[usize] {
        &self.cols[user]
    }

    pub fn get(&self, item: usize, user: usize) -> bool {
        self.rows[item].binary_search(&user).is_ok()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&j| (i, j)))
    }

    /// Item degrees (row sums).
    pub fn row_degrees(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    /// User degrees (column sums).
    pub fn col_degrees(&self) -> Vec<usize> {
        self.cols.iter().map(Vec::len).collect()
    }

    /// Removes empty rows and columns, returning the pruned matrix together
    /// with the removed row and column indices.
    pub fn prune_isolated(&self) -> (RatingMatrix, Vec<usize>, Vec<usize>) {
        let keep_rows: Vec<usize> = (0..self.n).filter(|&i| !self.rows[i].is_empty()).collect();
        let keep_cols: Vec<usize> = (0..self.m).filter(|&j| !self.cols[j].is_empty()).collect();
        let removed_rows = (0..self.n).filter(|i| self.rows[*i].is_empty()).collect();
        let removed_cols = (0..self.m).filter(|j| self.cols[*j].is_empty()).collect();
        let mut col_map = vec![usize::MAX; self.m];
        for (new, &old) in keep_cols.iter().enumerate() {
            col_map[old] = new;
        }
        let pairs = keep_rows
            .iter()
            .enumerate()
            .flat_map(|(new_i, &old_i)| self.rows[old_i].iter().map(move |&j| (new_i, j)))
            .map(|(i, j)| (i, col_map[j]));
        let pruned = RatingMatrix::from_pairs(keep_rows.len(), keep_cols.len(), pairs)
            .expect("pruned indices are in range");
        (pruned, removed_rows, removed_cols)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut out = nalgebra::DMatrix::zeros(self.n, self.m);
        for (i, j) in self.entries() {
            out[(i, j)] = 1.0;
        }
        out
    }
}

/// One entry per distinct (item, training user) pair of the log.
pub fn build_matrix(log: &[Interaction], split: &DatasetSplit) -> RatingMatrix {
    let pairs = log.iter().filter_map(|it| {
        let col = *split.user_index.get(&it.user)?;
        let row = split.item_index.row(&it.item)?;
        Some((row, col))
    });
    RatingMatrix::from_pairs(split.item_index.len(), split.train_users.len(), pairs)
        .expect("split indices are dense")
}

/// Groups events by user, keeping file order within each user.
pub fn group_by_user(log: &[Interaction]) -> HashMap<&str, Vec<&Interaction>> {
    let mut out: HashMap<&str, Vec<&Interaction>> = HashMap::new();
    for it in log {
        out.entry(it.user.as_str()).or_default().push(it);
    }
    out
}

/// Distinct items of one user's events in chronological order. Equal
/// timestamps keep file order; a repeated item stays at its first occurrence.
pub fn chronological_items<'a>(events: &[&'a Interaction]) -> Vec<&'a str> {
    let mut sorted: Vec<&Interaction> = events.to_vec();
    sorted.sort_by_key(|it| it.timestamp);
    let mut seen = HashSet::new();
    sorted
        .into_iter()
        .filter(|it| seen.insert(it.item.as_str()))
        .map(|it| it.item.as_str())
        .collect()
}

/// A user's history with the most recent distinct item held out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Holdout<'a> {
    /// Earlier items, chronological.
    pub prefix: Vec<&'a str>,
    pub last: &'a str,
}

pub fn holdout_last<'a>(events: &[&'a Interaction]) -> Result<Holdout<'a>> {
    let mut items = chronological_items(events);
    if items.len() < 2 {
        return Err(Error::Holdout(items.len()));
    }
    let last = items.pop().expect("len >= 2");
    Ok(Holdout {
        prefix: items,
        last,
    })
}
