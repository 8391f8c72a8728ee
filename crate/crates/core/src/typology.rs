//! Typological distance tables and per-pair feature vectors.
//!
//! Distances arrive as a flat CSV export with the header
//! `lang1,lang2,genetic,geographic,syntactic,phonological,inventory,featural`.
//! Lookups are symmetric; incomplete rows are rejected rather than imputed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{LangCode, LanguagePair};
use crate::error::{Error, Result};
use crate::tar::{pair_tar, TarRecord};

pub const FACET_NAMES: [&str; 6] = [
    "genetic",
    "geographic",
    "syntactic",
    "phonological",
    "inventory",
    "featural",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Facets {
    pub genetic: f64,
    pub geographic: f64,
    pub syntactic: f64,
    pub phonological: f64,
    pub inventory: f64,
    pub featural: f64,
}

impl Facets {
    pub fn from_array(v: [f64; 6]) -> Self {
        Facets {
            genetic: v[0],
            geographic: v[1],
            syntactic: v[2],
            phonological: v[3],
            inventory: v[4],
            featural: v[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.genetic,
            self.geographic,
            self.syntactic,
            self.phonological,
            self.inventory,
            self.featural,
        ]
    }

    pub fn mean(&self) -> f64 {
        mean_distance(&self.to_array())
    }

    fn zero() -> Self {
        Facets::from_array([0.0; 6])
    }
}

pub fn mean_distance(facets: &[f64; 6]) -> f64 {
    facets.iter().sum::<f64>() / 6.0
}

/// Symmetric distance lookup keyed by the sorted code pair.
#[derive(Debug, Clone, Default)]
pub struct DistanceTable {
    entries: BTreeMap<(LangCode, LangCode), Facets>,
}

fn key(a: &LangCode, b: &LangCode) -> (LangCode, LangCode) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl DistanceTable {
    pub fn insert(&mut self, a: LangCode, b: LangCode, facets: Facets) -> Result<()> {
        for (name, v) in FACET_NAMES.iter().zip(facets.to_array()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Distance(format!("{a}-{b}: {name} = {v} outside [0, 1]")));
            }
        }
        if a == b && facets.to_array().iter().any(|&v| v != 0.0) {
            return Err(Error::Distance(format!("{a}-{a}: self-distance must be zero")));
        }
        let k = key(&a, &b);
        if let Some(prev) = self.entries.get(&k) {
            if *prev != facets {
                return Err(Error::Distance(format!("{a}-{b}: conflicting duplicate rows")));
            }
            return Ok(());
        }
        self.entries.insert(k, facets);
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::Distance(format!("{other:?}")),
            })?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.to_string(),
                })
        };
        let l1 = col("lang1")?;
        let l2 = col("lang2")?;
        let facet_cols = FACET_NAMES.iter().map(|n| col(n)).collect::<Result<Vec<_>>>()?;

        let mut table = DistanceTable::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map_or(i + 2, |p| p.line() as usize);
            let a: LangCode = rec[l1].parse()?;
            let b: LangCode = rec[l2].parse()?;
            let mut values = [0.0; 6];
            for (slot, (&c, name)) in values.iter_mut().zip(facet_cols.iter().zip(FACET_NAMES)) {
                let raw = rec.get(c).unwrap_or("");
                if raw.is_empty() {
                    return Err(Error::Distance(format!("line {line}: {a}-{b} is missing {name}")));
                }
                *slot = raw
                    .parse()
                    .map_err(|_| Error::Distance(format!("line {line}: {name} value {raw:?} is not a number")))?;
            }
            table
                .insert(a, b, Facets::from_array(values))
                .map_err(|e| Error::Distance(format!("line {line}: {e}")))?;
        }
        Ok(table)
    }

    pub fn get(&self, a: &LangCode, b: &LangCode) -> Option<Facets> {
        if a == b {
            return Some(Facets::zero());
        }
        self.entries.get(&key(a, b)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairFeatures {
    pub pair: LanguagePair,
    pub tar_sum: f64,
    pub facets: Facets,
    pub mean_distance: f64,
}

impl PairFeatures {
    /// Feature values in column order: TAR, the six facets, their mean.
    pub fn values(&self) -> [f64; 8] {
        let f = self.facets.to_array();
        [self.tar_sum, f[0], f[1], f[2], f[3], f[4], f[5], self.mean_distance]
    }
}

pub const FEATURE_COLUMNS: [&str; 8] = [
    "TAR",
    "GENETIC",
    "GEOGRAPHIC",
    "SYNTACTIC",
    "PHONOLOGICAL",
    "INVENTORY",
    "FEATURAL",
    "MEAN",
];

pub fn pair_features(
    pair: &LanguagePair,
    distances: &DistanceTable,
    src_tar: &TarRecord,
    tgt_tar: &TarRecord,
) -> Result<PairFeatures> {
    if src_tar.language != pair.src || tgt_tar.language != pair.tgt {
        return Err(Error::Invalid(format!(
            "TAR records ({}, {}) do not match pair {pair}",
            src_tar.language, tgt_tar.language
        )));
    }
    let facets = distances
        .get(&pair.src, &pair.tgt)
        .ok_or_else(|| Error::Missing(format!("no typological distances for {pair}")))?;
    Ok(PairFeatures {
        pair: pair.clone(),
        tar_sum: pair_tar(src_tar, tgt_tar)?,
        mean_distance: facets.mean(),
        facets,
    })
}

pub fn features_to_csv(features: &[PairFeatures]) -> String {
    let mut out = String::from("lp,tar_sum");
    for n in FACET_NAMES {
        out.push(',');
        out.push_str(n);
    }
    out.push_str(",mean\n");
    for f in features {
        out.push_str(&f.pair.to_string());
        for v in f.values() {
            out.push_str(&format!(",{v:.4}"));
        }
        out.push('\n');
    }
    out
}
