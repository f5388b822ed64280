use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problems::McProblem;

/// `(row, col, value)`: row is the item, col the user.
pub type Triplet = (usize, usize, f64);

const JESTER_MISSING: f64 = 99.0;
const JESTER_RANGE: (f64, f64) = (-10.0, 10.0);
const MOVIELENS_RANGE: (f64, f64) = (1.0, 5.0);
const TRIPLET_HEADER: &str = "row,col,value";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatingFormat {
    /// One CSV row per user, one column per item, `99` for missing; an
    /// optional leading column with the number of rated items.
    Jester,
    /// `UserID::MovieID::Rating::Timestamp` lines.
    Movielens,
    /// `row,col,value` with a one-line header.
    Triplets,
}

impl fmt::Display for RatingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatingFormat::Jester => "jester",
            RatingFormat::Movielens => "movielens",
            RatingFormat::Triplets => "triplets",
        })
    }
}

impl FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jester" => Ok(RatingFormat::Jester),
            "movielens" => Ok(RatingFormat::Movielens),
            "triplets" => Ok(RatingFormat::Triplets),
            _ => Err(Error::Config(format!(
                "unknown rating format `{s}` (expected jester, movielens or triplets)"
            ))),
        }
    }
}

/// A sparse items × users rating matrix, optionally split into train and test.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingDataset {
    /// `d`
    pub n_items: usize,
    /// `N`
    pub n_users: usize,
    pub train: Vec<Triplet>,
    pub test: Vec<Triplet>,
    pub value_range: (f64, f64),
}

impl RatingDataset {
    pub fn to_problem(&self, rank: usize, ridge: f64) -> Result<McProblem> {
        McProblem::from_triplets(self.n_items, self.n_users, rank, &self.train, &self.test, ridge)
    }

    fn all_ratings(&self) -> impl Iterator<Item = &Triplet> {
        self.train.iter().chain(&self.test)
    }
}

/// Result of [`split_ratings`].
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub dataset: RatingDataset,
    /// Users with too few ratings to hold any out; removed before re-indexing.
    pub dropped_users: usize,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads every rating into `train`; `test` is empty.
pub fn load_ratings(path: &Path, format: RatingFormat) -> Result<RatingDataset> {
    let text = fs::read_to_string(path)?;
    match format {
        RatingFormat::Jester => parse_jester(path, &text),
        RatingFormat::Movielens => parse_movielens(path, &text),
        RatingFormat::Triplets => {
            let train = parse_triplets(path, &text)?;
            let n_items = train.iter().map(|t| t.0 + 1).max().unwrap_or(0);
            let n_users = train.iter().map(|t| t.1 + 1).max().unwrap_or(0);
            let lo = train.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
            let hi = train.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
            Ok(RatingDataset {
                n_items,
                n_users,
                train,
                test: Vec::new(),
                value_range: (lo, hi),
            })
        }
    }
}

fn parse_jester(path: &Path, text: &str) -> Result<RatingDataset> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_error(path, i + 1, format!("`{}` is not a number", f.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some((_, first)) = rows.first() {
            if fields.len() != first.len() {
                return Err(parse_error(
                    path,
                    i + 1,
                    format!("{} fields, expected {}", fields.len(), first.len()),
                ));
            }
        }
        rows.push((i + 1, fields));
    }
    let has_count = !rows.is_empty()
        && rows.iter().all(|(_, f)| {
            let rated = f[1..].iter().filter(|&&v| v != JESTER_MISSING).count();
            f.len() > 1 && f[0] == rated as f64
        });
    let skip = usize::from(has_count);
    let n_items = rows.first().map_or(0, |(_, f)| f.len() - skip);
    let mut train = Vec::new();
    for (user, (line, fields)) in rows.iter().enumerate() {
        for (item, &v) in fields[skip..].iter().enumerate() {
            if v == JESTER_MISSING {
                continue;
            }
            if !(JESTER_RANGE.0..=JESTER_RANGE.1).contains(&v) {
                return Err(parse_error(path, *line, format!("rating {v} outside [-10, 10]")));
            }
            train.push((item, user, v));
        }
    }
    Ok(RatingDataset {
        n_items,
        n_users: rows.len(),
        train,
        test: Vec::new(),
        value_range: JESTER_RANGE,
    })
}

fn parse_movielens(path: &Path, text: &str) -> Result<RatingDataset> {
    let mut raw = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim().split("::").collect();
        if parts.len() != 4 {
            return Err(parse_error(path, i + 1, format!("expected 4 `::`-separated fields, found {}", parts.len())));
        }
        let id = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|_| parse_error(path, i + 1, format!("bad {what} `{s}`")))
        };
        let user = id(parts[0], "user id")?;
        let movie = id(parts[1], "movie id")?;
        let value: f64 = parts[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_error(path, i + 1, format!("bad rating `{}`", parts[2])))?;
        id(parts[3], "timestamp")?;
        raw.push((movie, user, value));
    }
    let dense = |ids: Vec<u64>| -> BTreeMap<u64, usize> {
        let mut ids = ids;
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().enumerate().map(|(k, id)| (id, k)).collect()
    };
    let movies = dense(raw.iter().map(|t| t.0).collect());
    let users = dense(raw.iter().map(|t| t.1).collect());
    let train = raw
        .iter()
        .map(|&(m, u, v)| (movies[&m], users[&u], v))
        .collect();
    Ok(RatingDataset {
        n_items: movies.len(),
        n_users: users.len(),
        train,
        test: Vec::new(),
        value_range: MOVIELENS_RANGE,
    })
}

fn parse_triplets(path: &Path, text: &str) -> Result<Vec<Triplet>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRIPLET_HEADER => {}
        _ => return Err(parse_error(path, 1, format!("missing `{TRIPLET_HEADER}` header"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match parts.as_slice() {
            [r, c, v] => r
                .parse::<usize>()
                .ok()
                .zip(c.parse::<usize>().ok())
                .zip(v.parse::<f64>().ok().filter(|v| v.is_finite())),
            _ => None,
        };
        let ((row, col), value) =
            parsed.ok_or_else(|| parse_error(path, i + 1, format!("expected `row,col,value`, found `{line}`")))?;
        out.push((row, col, value));
    }
    Ok(out)
}

pub fn read_triplets(path: &Path) -> Result<Vec<Triplet>> {
    parse_triplets(path, &fs::read_to_string(path)?)
}

/// Values are written in shortest round-trip form, so reading back is exact.
pub fn write_triplets(path: &Path, triplets: &[Triplet]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{TRIPLET_HEADER}")?;
    for &(r, c, v) in triplets {
        writeln!(out, "{r},{c},{v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes train and test ratings together in `format`.
pub fn write_ratings(path: &Path, ds: &RatingDataset, format: RatingFormat) -> Result<()> {
    match format {
        RatingFormat::Triplets => {
            let all: Vec<Triplet> = ds.all_ratings().copied().collect();
            write_triplets(path, &all)
        }
        RatingFormat::Movielens => {
            let mut out = BufWriter::new(fs::File::create(path)?);
            for &(item, user, v) in ds.all_ratings() {
                writeln!(out, "{}::{}::{v}::0", user + 1, item + 1)?;
            }
            out.flush()?;
            Ok(())
        }
        RatingFormat::Jester => {
            let mut dense = vec![vec![JESTER_MISSING; ds.n_items]; ds.n_users];
            for &(item, user, v) in ds.all_ratings() {
                dense[user][item] = v;
            }
            let mut out = BufWriter::new(fs::File::create(path)?);
            for row in &dense {
                let rated = row.iter().filter(|&&v| v != JESTER_MISSING).count();
                let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{rated},{}", fields.join(","))?;
            }
            out.flush()?;
            Ok(())
        }
    }
}

/// Moves `per_user_holdout` uniformly chosen ratings of every user into
/// `test`. Users with at most `per_user_holdout` ratings are dropped and the
/// remaining users re-indexed in order.
pub fn split_ratings(ds: &RatingDataset, per_user_holdout: usize, seed: u64) -> Result<Split> {
    if !ds.test.is_empty() {
        return Err(Error::Config("dataset is already split".into()));
    }
    let mut by_user: Vec<Vec<Triplet>> = vec![Vec::new(); ds.n_users];
    for &t in &ds.train {
        if t.1 >= ds.n_users || t.0 >= ds.n_items {
            return Err(Error::Config(format!("rating ({}, {}) outside the dataset", t.0, t.1)));
        }
        by_user[t.1].push(t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let mut kept = 0;
    let mut dropped = 0;
    for ratings in &by_user {
        if ratings.len() <= per_user_holdout {
            dropped += 1;
            continue;
        }
        let mut held = vec![false; ratings.len()];
        for k in sample(&mut rng, ratings.len(), per_user_holdout) {
            held[k] = true;
        }
        for (&(item, _, v), &h) in ratings.iter().zip(&held) {
            if h { &mut test } else { &mut train }.push((item, kept, v));
        }
        kept += 1;
    }
    if dropped > 0 {
        warn!("dropped {dropped} users with at most {per_user_holdout} ratings");
    }
    Ok(Split {
        dataset: RatingDataset {
            n_items: ds.n_items,
            n_users: kept,
            train,
            test,
            value_range: ds.value_range,
        },
        dropped_users: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn movielens_lines_become_triplets() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.dat", "1::10::5::978300760\n1::20::3::978302109\n7::10::4::978301968\n");
        let ds = load_ratings(&p, RatingFormat::Movielens).unwrap();
        assert_eq!((ds.n_items, ds.n_users), (2, 2));
        assert_eq!(ds.train, vec![(0, 0, 5.0), (1, 0, 3.0), (0, 1, 4.0)]);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.dat", "1::10::5::1\n1::x::3::2\n");
        match load_ratings(&p, RatingFormat::Movielens) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let p = write(&dir, "j.csv", "1.5,99\n2.0\n");
        assert!(matches!(load_ratings(&p, RatingFormat::Jester), Err(Error::Parse { line: 2, .. })));
        let p = write(&dir, "j2.csv", "11.0,99\n");
        assert!(matches!(load_ratings(&p, RatingFormat::Jester), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn jester_sentinel_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "j.csv", "2,-9.5,99,3.25\n1,99,99,7\n");
        let ds = load_ratings(&p, RatingFormat::Jester).unwrap();
        assert_eq!((ds.n_items, ds.n_users), (3, 2));
        assert_eq!(ds.train, vec![(0, 0, -9.5), (2, 0, 3.25), (2, 1, 7.0)]);
        // without a count column every field is a rating
        let p = write(&dir, "k.csv", "-9.5,99,3.25\n");
        let ds = load_ratings(&p, RatingFormat::Jester).unwrap();
        assert_eq!(ds.n_items, 3);
        assert!(ds.train.iter().all(|t| t.2 != 99.0));
    }

    #[test]
    fn writers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = RatingDataset {
            n_items: 3,
            n_users: 2,
            train: vec![(0, 0, 1.0 / 3.0), (2, 0, -7.25), (1, 1, 0.1 + 0.2)],
            test: Vec::new(),
            value_range: JESTER_RANGE,
        };
        let p = dir.path().join("j.csv");
        write_ratings(&p, &ds, RatingFormat::Jester).unwrap();
        assert_eq!(load_ratings(&p, RatingFormat::Jester).unwrap(), ds);
        let p = dir.path().join("t.csv");
        write_ratings(&p, &ds, RatingFormat::Triplets).unwrap();
        assert_eq!(read_triplets(&p).unwrap(), ds.train);
        let ml = RatingDataset {
            train: vec![(0, 0, 5.0), (2, 0, 1.0), (1, 1, 3.0)],
            value_range: MOVIELENS_RANGE,
            ..ds
        };
        let p = dir.path().join("m.dat");
        write_ratings(&p, &ml, RatingFormat::Movielens).unwrap();
        assert_eq!(load_ratings(&p, RatingFormat::Movielens).unwrap(), ml);
    }

    #[test]
    fn triplets_need_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t.csv", "0,0,1\n");
        assert!(matches!(read_triplets(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn split_holds_out_per_user_and_drops_sparse_users() {
        let mut train = Vec::new();
        for user in 0..5 {
            let count = if user == 2 { 2 } else { 6 };
            for item in 0..count {
                train.push((item, user, (item + user) as f64));
            }
        }
        let ds = RatingDataset {
            n_items: 6,
            n_users: 5,
            train,
            test: Vec::new(),
            value_range: JESTER_RANGE,
        };
        let split = split_ratings(&ds, 2, 11).unwrap();
        assert_eq!(split.dropped_users, 1);
        let out = &split.dataset;
        assert_eq!(out.n_users, 4);
        assert_eq!(out.test.len(), 8);
        assert_eq!(out.train.len(), 16);
        for u in 0..4 {
            assert_eq!(out.test.iter().filter(|t| t.1 == u).count(), 2);
        }
        let train_cells: HashSet<(usize, usize)> = out.train.iter().map(|t| (t.0, t.1)).collect();
        assert!(out.test.iter().all(|t| !train_cells.contains(&(t.0, t.1))));
        assert_eq!(split_ratings(&ds, 2, 11).unwrap(), split);
        assert_ne!(split_ratings(&ds, 2, 12).unwrap().dataset.test, out.test);
        assert!(out.to_problem(2, 1e-8).is_ok());
    }
}
