//! Random toy chemistries and small helpers shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use hyperretro::gateway::TemplateSpec;
use hyperretro::smiles::CanonicalSmiles;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn c(s: &str) -> CanonicalSmiles {
    CanonicalSmiles::from_normalized(s)
}

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_hyperretro"))
}

/// Molecule `i` in the placeholder grammar: `i` in base 25 over `A..=Y`,
/// padded with a variable run of `Z` so heavy-atom counts differ. Never
/// starts with `Z`.
pub fn mol(i: usize) -> String {
    let mut digits = Vec::new();
    let mut n = i;
    loop {
        digits.push(b'A' + (n % 25) as u8);
        n /= 25;
        if n == 0 {
            break;
        }
    }
    digits.reverse();
    let mut s = String::from_utf8(digits).expect("ascii");
    s.push_str(&"Z".repeat((i * 7) % 6));
    s
}

/// Reagent-only species; disjoint from [`mol`].
pub fn solvent(j: usize) -> String {
    format!("Z{}", mol(j))
}

#[derive(Debug, Clone)]
pub struct ChemParams {
    pub molecules: usize,
    pub templates: usize,
    pub solvents: usize,
    /// Templates only build molecule `i` from molecules with larger index.
    pub acyclic: bool,
    pub max_lhs: usize,
    pub reagent_prob: f64,
    /// Chance of a sibling template sharing the precursor set but giving
    /// another product.
    pub competition_prob: f64,
    /// Chance of a copy that differs only by its reagent.
    pub solvent_variant_prob: f64,
    pub superclasses: u8,
    /// Precursor sets are never shared between templates, so every arc has
    /// likelihood 1.
    pub unique_keys: bool,
    pub max_per_product: usize,
}

impl Default for ChemParams {
    fn default() -> Self {
        Self {
            molecules: 30,
            templates: 45,
            solvents: 4,
            acyclic: false,
            max_lhs: 3,
            reagent_prob: 0.3,
            competition_prob: 0.4,
            solvent_variant_prob: 0.25,
            superclasses: 4,
            unique_keys: false,
            max_per_product: 6,
        }
    }
}

const WEIGHTS: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0];

pub fn random_chemistry(rng: &mut impl Rng, p: &ChemParams) -> Vec<TemplateSpec> {
    let mut out: Vec<TemplateSpec> = Vec::new();
    let mut keys: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut per_product = vec![0usize; p.molecules];
    let class = |rng: &mut dyn rand::RngCore| {
        format!("{}.{}.{}", rng.gen_range(1..=p.superclasses), rng.gen_range(0..3), rng.gen_range(0..3))
    };
    let mut attempts = 0;
    while out.len() < p.templates && attempts < p.templates * 50 {
        attempts += 1;
        let product = if p.acyclic { rng.gen_range(0..p.molecules - 1) } else { rng.gen_range(0..p.molecules) };
        if per_product[product] >= p.max_per_product {
            continue;
        }
        let pool: Vec<usize> = if p.acyclic {
            (product + 1..p.molecules).collect()
        } else {
            (0..p.molecules).filter(|&m| m != product).collect()
        };
        let n = rng.gen_range(1..=p.max_lhs.min(pool.len()));
        let mut lhs: Vec<String> = pool.choose_multiple(rng, n).map(|&m| mol(m)).collect();
        lhs.sort();
        let reagents: Vec<String> = if p.solvents > 0 && rng.gen_bool(p.reagent_prob) {
            vec![solvent(rng.gen_range(0..p.solvents))]
        } else {
            Vec::new()
        };
        let key: Vec<String> = lhs.iter().chain(&reagents).cloned().collect();
        if p.unique_keys && !keys.insert(key) {
            continue;
        }
        let spec = TemplateSpec {
            lhs: lhs.clone(),
            reagents: reagents.clone(),
            rhs: mol(product),
            weight: *WEIGHTS.choose(rng).expect("non-empty"),
            class: class(rng),
        };
        per_product[product] += 1;
        out.push(spec.clone());
        if p.unique_keys {
            continue;
        }
        if rng.gen_bool(p.competition_prob) {
            for _ in 0..rng.gen_range(1..=3) {
                let other = loop {
                    let q = rng.gen_range(0..p.molecules);
                    if q != product && !lhs.contains(&mol(q)) {
                        break q;
                    }
                };
                out.push(TemplateSpec {
                    rhs: mol(other),
                    weight: *WEIGHTS.choose(rng).expect("non-empty"),
                    class: class(rng),
                    ..spec.clone()
                });
            }
        }
        if p.solvents > 1 && rng.gen_bool(p.solvent_variant_prob) {
            let s = solvent(rng.gen_range(0..p.solvents));
            if !reagents.contains(&s) {
                out.push(TemplateSpec { reagents: vec![s], ..spec.clone() });
            }
        }
    }
    out
}

/// Molecules that some template produces.
pub fn products(specs: &[TemplateSpec]) -> Vec<String> {
    specs.iter().map(|s| s.rhs.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Writes templates and a toy manifest into `dir`; returns the manifest path.
pub fn write_toy(dir: &std::path::Path, specs: &[TemplateSpec]) -> PathBuf {
    let templates = dir.join("templates.json");
    std::fs::write(&templates, serde_json::to_string_pretty(specs).unwrap()).unwrap();
    let manifest = dir.join("models.toml");
    std::fs::write(&manifest, "transport = \"toy\"\ntemplates = \"templates.json\"\n").unwrap();
    manifest
}
