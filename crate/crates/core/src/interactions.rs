//! Implicit-feedback interaction matrices: parsing, statistics and
//! deterministic per-user holdout splits.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kv::KvFile;

/// Name of the generator used by [`split_holdout`], recorded in manifests.
pub const SPLIT_PRNG: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64), per-user Fisher-Yates";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// One line per user: `user item item ...`, integers, `#` comments.
    Adjacency,
    /// One interaction per line: `user<TAB>item[<TAB>ignored...]`.
    Triplet,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacency" => Ok(Format::Adjacency),
            "triplet" => Ok(Format::Triplet),
            other => Err(Error::Format(other.to_string())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Adjacency => "adjacency",
            Format::Triplet => "triplet",
        })
    }
}

/// Bidirectional map between external ids and dense indices, in
/// first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    index: HashMap<String, u32>,
    external: Vec<String>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `id`, assigning the next one on first sight.
    pub fn intern(&mut self, id: &str) -> u32 {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.external.len() as u32;
        self.index.insert(id.to_string(), i);
        self.external.push(id.to_string());
        i
    }

    pub fn get(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn external(&self, index: u32) -> &str {
        &self.external[index as usize]
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    /// Identity map `"0".."n-1"`, used for generated data.
    pub fn sequential(n: usize) -> Self {
        let mut map = IdMap::new();
        for i in 0..n {
            map.intern(&i.to_string());
        }
        map
    }
}

/// Binary user x item matrix in CSR form. Column indices are sorted and
/// unique within each row; presence of an entry means rating 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    indptr: Vec<usize>,
    indices: Vec<u32>,
    user_ids: IdMap,
    item_ids: IdMap,
}

impl InteractionMatrix {
    /// Builds a matrix from per-user item lists; lists are sorted and
    /// deduplicated. `rows.len()` must equal `user_ids.len()`.
    pub fn from_rows(mut rows: Vec<Vec<u32>>, user_ids: IdMap, item_ids: IdMap) -> Result<Self> {
        if rows.len() != user_ids.len() {
            return Err(Error::Shape(format!(
                "{} rows for {} user ids",
                rows.len(),
                user_ids.len()
            )));
        }
        let n_items = item_ids.len() as u32;
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last >= n_items {
                    return Err(Error::Shape(format!(
                        "item index {last} >= n_items {n_items}"
                    )));
                }
            }
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        Ok(Self {
            indptr,
            indices,
            user_ids,
            item_ids,
        })
    }

    pub fn n_users(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.indices.len()
    }

    /// Sorted item indices of user `u`.
    pub fn row(&self, u: usize) -> &[u32] {
        &self.indices[self.indptr[u]..self.indptr[u + 1]]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.n_users()).map(move |u| self.row(u))
    }

    pub fn contains(&self, u: usize, item: u32) -> bool {
        self.row(u).binary_search(&item).is_ok()
    }

    pub fn user_ids(&self) -> &IdMap {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &IdMap {
        &self.item_ids
    }

    /// Re-embeds the matrix into larger id maps that extend the current ones
    /// (same ids at the same indices, more appended). New users get empty rows.
    pub fn extend_index_space(&self, user_ids: &IdMap, item_ids: &IdMap) -> Result<Self> {
        let is_prefix = |old: &IdMap, new: &IdMap| {
            old.len() <= new.len()
                && (0..old.len() as u32).all(|i| old.external(i) == new.external(i))
        };
        if !is_prefix(&self.user_ids, user_ids) || !is_prefix(&self.item_ids, item_ids) {
            return Err(Error::Shape(
                "id maps do not extend the matrix's index space".into(),
            ));
        }
        let mut indptr = self.indptr.clone();
        indptr.resize(user_ids.len() + 1, self.indices.len());
        Ok(Self {
            indptr,
            indices: self.indices.clone(),
            user_ids: user_ids.clone(),
            item_ids: item_ids.clone(),
        })
    }

    /// Writes the matrix with external ids. Adjacency output keeps users
    /// without interactions as bare lines; triplet output drops them.
    pub fn write<W: Write>(&self, mut out: W, format: Format) -> Result<()> {
        for (u, row) in self.rows().enumerate() {
            let user = self.user_ids.external(u as u32);
            match format {
                Format::Adjacency => {
                    write!(out, "{user}")?;
                    for &i in row {
                        write!(out, " {}", self.item_ids.external(i))?;
                    }
                    writeln!(out)?;
                }
                Format::Triplet => {
                    for &i in row {
                        writeln!(out, "{user}\t{}", self.item_ids.external(i))?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self, format: Format) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf, format)
            .expect("writing to a Vec cannot fail");
        buf
    }
}

/// Parses `source` assigning indices in first-appearance order.
pub fn parse_interactions<R: BufRead>(source: R, format: Format) -> Result<InteractionMatrix> {
    parse_with_ids(source, format, IdMap::new(), IdMap::new())
}

/// Parses `source` into the index space given by existing id maps,
/// extending them with ids seen for the first time. Used to load
/// train/test/validation files into one shared index space.
pub fn parse_with_ids<R: BufRead>(
    source: R,
    format: Format,
    mut user_ids: IdMap,
    mut item_ids: IdMap,
) -> Result<InteractionMatrix> {
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); user_ids.len()];
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match format {
            Format::Adjacency => {
                let mut tokens = trimmed.split_whitespace();
                let user = tokens.next().expect("non-empty line has a token");
                check_integer(user, lineno)?;
                let u = user_ids.intern(user) as usize;
                if u == rows.len() {
                    rows.push(Vec::new());
                }
                for item in tokens {
                    check_integer(item, lineno)?;
                    rows[u].push(item_ids.intern(item));
                }
            }
            Format::Triplet => {
                let mut fields = line.split('\t');
                let user = fields.next().map(str::trim).unwrap_or("");
                let item = fields.next().map(str::trim).unwrap_or("");
                if user.is_empty() || item.is_empty() {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "expected `user<TAB>item`".into(),
                    });
                }
                let u = user_ids.intern(user) as usize;
                if u == rows.len() {
                    rows.push(Vec::new());
                }
                rows[u].push(item_ids.intern(item));
            }
        }
    }
    InteractionMatrix::from_rows(rows, user_ids, item_ids)
}

/// Loads train, test and optional validation files into one index space:
/// ids are numbered by first appearance across train, then test, then val.
pub fn load_split<R: BufRead>(train: R, test: R, val: Option<R>, format: Format) -> Result<Split> {
    let train = parse_interactions(train, format)?;
    let test = parse_with_ids(
        test,
        format,
        train.user_ids().clone(),
        train.item_ids().clone(),
    )?;
    let val = match val {
        Some(v) => parse_with_ids(v, format, test.user_ids().clone(), test.item_ids().clone())?,
        None => InteractionMatrix::from_rows(Vec::new(), IdMap::new(), IdMap::new())?,
    };
    let (users, items) =
        if val.user_ids().len() >= test.user_ids().len() && val.n_items() >= test.n_items() {
            (val.user_ids().clone(), val.item_ids().clone())
        } else {
            (test.user_ids().clone(), test.item_ids().clone())
        };
    Ok(Split {
        train: train.extend_index_space(&users, &items)?,
        test: test.extend_index_space(&users, &items)?,
        val: val.extend_index_space(&users, &items)?,
    })
}

fn check_integer(token: &str, line: usize) -> Result<()> {
    token.parse::<u64>().map(|_| ()).map_err(|_| Error::Parse {
        line,
        msg: format!("`{token}` is not a non-negative integer id"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub density: f64,
}

pub fn dataset_stats(r: &InteractionMatrix) -> Result<DatasetStats> {
    if r.n_users() == 0 || r.n_items() == 0 || r.n_interactions() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(DatasetStats {
        n_users: r.n_users(),
        n_items: r.n_items(),
        n_interactions: r.n_interactions(),
        density: r.n_interactions() as f64 / (r.n_users() as f64 * r.n_items() as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub test_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, test_frac: f64, val_frac: f64, seed: u64) -> Result<Self> {
        let fracs = [train_frac, test_frac, val_frac];
        if fracs.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Parameter(format!(
                "split fractions must be nonnegative: {fracs:?}"
            )));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            train_frac,
            test_frac,
            val_frac,
            seed,
        })
    }

    /// Per-user counts `(train, test, val)` for `n` interactions.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        // the epsilon absorbs products like 0.1 * 30 landing just below 3
        let floor = |frac: f64| ((frac * n as f64) + 1e-9).floor() as usize;
        let n_test = floor(self.test_frac);
        let n_val = floor(self.val_frac).min(n - n_test);
        (n - n_test - n_val, n_test, n_val)
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            test_frac: 0.2,
            val_frac: 0.1,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: InteractionMatrix,
    pub test: InteractionMatrix,
    pub val: InteractionMatrix,
}

/// Shuffles each user's interactions with a seeded generator and cuts them
/// into test (first), validation (next) and train (remainder). All three
/// outputs share the input's index space.
pub fn split_holdout(r: &InteractionMatrix, spec: &SplitSpec) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_users = r.n_users();
    let (mut train, mut test, mut val) = (
        Vec::with_capacity(n_users),
        Vec::with_capacity(n_users),
        Vec::with_capacity(n_users),
    );
    for row in r.rows() {
        let mut items = row.to_vec();
        items.shuffle(&mut rng);
        let (_, n_test, n_val) = spec.counts(items.len());
        let rest = items.split_off(n_test);
        test.push(items);
        let mut rest = rest;
        let tail = rest.split_off(n_val);
        val.push(rest);
        train.push(tail);
    }
    let build = |rows| {
        InteractionMatrix::from_rows(rows, r.user_ids().clone(), r.item_ids().clone())
            .expect("subsets of a valid matrix are valid")
    };
    Split {
        train: build(train),
        test: build(test),
        val: build(val),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Manifest describing how a split was produced.
pub fn split_manifest(spec: &SplitSpec, input_checksum: &str, split: &Split) -> KvFile {
    let mut kv = KvFile::new();
    kv.set("schema_version", crate::SCHEMA_VERSION);
    kv.set("seed", spec.seed);
    kv.set("train_frac", spec.train_frac);
    kv.set("test_frac", spec.test_frac);
    kv.set("val_frac", spec.val_frac);
    kv.set("prng", SPLIT_PRNG);
    kv.set(
        "rounding",
        "floor(test_frac*n), floor(val_frac*n), remainder to train",
    );
    kv.set("input_sha256", input_checksum);
    kv.set("train_interactions", split.train.n_interactions());
    kv.set("test_interactions", split.test.n_interactions());
    kv.set("val_interactions", split.val.n_interactions());
    kv
}
