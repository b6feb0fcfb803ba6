//! Translation traces: synthetic generators and the text trace format.
//!
//! A trace file holds one event per line, `<time> <cu> <hex va> <R|W>`:
//!
//! ```text
//! 0 0 0x80188000 R
//! 0 1 0x80189000 W
//! ```
//!
//! Generators hand event `i` to CU `i % cus` at time `i / cus`, so every CU
//! issues one translation per cycle.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{VirtAddr, Vfn, PAGE_SIZE};
use crate::memory::buddy::DEFAULT_HEAP_BASE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Access {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TranslationEvent {
    pub time: u64,
    pub cu: u32,
    pub va: VirtAddr,
    pub access: Access,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TranslationEvent>,
}

impl Trace {
    pub fn new(events: Vec<TranslationEvent>) -> Self {
        Trace { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Distinct pages touched.
    pub fn footprint(&self) -> usize {
        self.events.iter().map(|e| e.va.vfn()).collect::<HashSet<_>>().len()
    }

    /// Whether each CU's arrival times never go backwards.
    pub fn is_ordered_per_cu(&self) -> bool {
        let mut last = std::collections::HashMap::new();
        self.events.iter().all(|e| {
            let prev = last.insert(e.cu, e.time).unwrap_or(0);
            prev <= e.time
        })
    }
}

fn positive(key: &str, v: u64) -> Result<u64> {
    if v == 0 {
        return Err(Error::BadValue {
            key: key.into(),
            value: "0".into(),
            msg: "must be positive".into(),
        });
    }
    Ok(v)
}

fn events(cus: u32, pages: impl IntoIterator<Item = (Vfn, u64, Access)>) -> Trace {
    let events = pages
        .into_iter()
        .enumerate()
        .map(|(i, (vfn, offset, access))| TranslationEvent {
            time: i as u64 / cus as u64,
            cu: (i as u64 % cus as u64) as u32,
            va: VirtAddr(vfn.addr().0 + offset),
            access,
        })
        .collect();
    Trace { events }
}

/// `passes` sweeps over `pages` consecutive pages: little reuse distance,
/// easy on any TLB.
pub fn gen_sequential(base: Vfn, pages: u64, passes: u64, cus: u32) -> Result<Trace> {
    positive("pages", pages)?;
    positive("cus", cus as u64)?;
    let seq = (0..passes).flat_map(|_| (0..pages).map(|p| (base.offset(p), 0, Access::Read)));
    Ok(events(cus, seq))
}

/// Every page exactly once, visiting pages `stride` apart: all pages
/// congruent to 0, then to 1, and so on.
pub fn gen_strided(base: Vfn, pages: u64, stride: u64, cus: u32) -> Result<Trace> {
    positive("pages", pages)?;
    positive("stride", stride)?;
    positive("cus", cus as u64)?;
    let seq = (0..stride.min(pages))
        .flat_map(|start| (start..pages).step_by(stride as usize))
        .map(|p| (base.offset(p), 0, Access::Read));
    Ok(events(cus, seq))
}

/// Uniform random pages with random 8-byte-aligned offsets, a quarter of
/// them writes.
pub fn gen_random(base: Vfn, pages: u64, accesses: u64, seed: u64, cus: u32) -> Result<Trace> {
    positive("pages", pages)?;
    positive("cus", cus as u64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq: Vec<_> = (0..accesses)
        .map(|_| {
            let page = rng.gen_range(0..pages);
            let offset = rng.gen_range(0..PAGE_SIZE / 8) * 8;
            let access = if rng.gen_bool(0.25) { Access::Write } else { Access::Read };
            (base.offset(page), offset, access)
        })
        .collect();
    Ok(events(cus, seq))
}

/// A chain of `chain_length` distinct pages drawn from `pages`, in random
/// order, followed `passes` times.
pub fn gen_pointer_chase(base: Vfn, pages: u64, chain_length: u64, passes: u64, seed: u64, cus: u32) -> Result<Trace> {
    positive("pages", pages)?;
    positive("chain_length", chain_length)?;
    positive("cus", cus as u64)?;
    if chain_length > pages {
        return Err(Error::BadValue {
            key: "chain_length".into(),
            value: chain_length.to_string(),
            msg: format!("longer than the {pages} pages available"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain: Vec<(u64, u64)> = sample(&mut rng, pages as usize, chain_length as usize)
        .into_iter()
        .map(|p| (p as u64, rng.gen_range(0..PAGE_SIZE / 8) * 8))
        .collect();
    let seq = (0..passes).flat_map(|_| chain.iter().map(|&(p, off)| (base.offset(p), off, Access::Read)));
    Ok(events(cus, seq))
}

pub fn write_trace(trace: &Trace) -> String {
    let mut out = String::with_capacity(trace.len() * 24);
    for e in &trace.events {
        let rw = match e.access {
            Access::Read => 'R',
            Access::Write => 'W',
        };
        writeln!(out, "{} {} {:#x} {}", e.time, e.cu, e.va.0, rw).unwrap();
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::TraceSyntax {
            line: i + 1,
            msg: format!("{msg} in `{line}`"),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        let [time, cu, va, rw] = f[..] else {
            return Err(err("expected `<time> <cu> <hex va> <R|W>`"));
        };
        let va = va
            .strip_prefix("0x")
            .or_else(|| va.strip_prefix("0X"))
            .ok_or_else(|| err("address must be 0x-prefixed hex"))?;
        out.push(TranslationEvent {
            time: time.parse().map_err(|_| err("bad time"))?,
            cu: cu.parse().map_err(|_| err("bad cu"))?,
            va: VirtAddr(u64::from_str_radix(va, 16).map_err(|_| err("bad address"))?),
            access: match rw {
                "R" | "r" => Access::Read,
                "W" | "w" => Access::Write,
                _ => return Err(err("access must be R or W")),
            },
        });
    }
    Ok(Trace { events: out })
}

/// A generator invocation such as
/// `random,pages=4096,accesses=100000,seed=7,cus=16,base=0x80000`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorSpec {
    Sequential { base: Vfn, pages: u64, passes: u64, cus: u32 },
    Strided { base: Vfn, pages: u64, stride: u64, cus: u32 },
    Random { base: Vfn, pages: u64, accesses: u64, seed: u64, cus: u32 },
    PointerChase { base: Vfn, pages: u64, chain_length: u64, passes: u64, seed: u64, cus: u32 },
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<Trace> {
        match *self {
            GeneratorSpec::Sequential { base, pages, passes, cus } => gen_sequential(base, pages, passes, cus),
            GeneratorSpec::Strided { base, pages, stride, cus } => gen_strided(base, pages, stride, cus),
            GeneratorSpec::Random { base, pages, accesses, seed, cus } => gen_random(base, pages, accesses, seed, cus),
            GeneratorSpec::PointerChase { base, pages, chain_length, passes, seed, cus } => {
                gen_pointer_chase(base, pages, chain_length, passes, seed, cus)
            }
        }
    }
}

/// Parses `key=value` pairs after a leading name. Numbers may be decimal or
/// 0x-prefixed hex.
pub(crate) fn parse_params<'a>(spec: &'a str, allowed: &[&str]) -> Result<(&'a str, Vec<(&'a str, u64)>)> {
    let mut parts = spec.split(',').map(str::trim);
    let name = parts.next().unwrap_or("");
    let mut out = Vec::new();
    for p in parts.filter(|p| !p.is_empty()) {
        let (k, v) = p.split_once('=').ok_or_else(|| Error::BadValue {
            key: p.into(),
            value: String::new(),
            msg: "expected key=value".into(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if !allowed.contains(&k) {
            return Err(Error::UnknownKey(k.into()));
        }
        out.push((k, parse_u64(k, v)?));
    }
    Ok((name, out))
}

pub(crate) fn parse_u64(key: &str, v: &str) -> Result<u64> {
    let parsed = match v.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => v.parse(),
    };
    parsed.map_err(|_| Error::BadValue {
        key: key.into(),
        value: v.into(),
        msg: "expected an unsigned integer".into(),
    })
}

impl FromStr for GeneratorSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        const KEYS: &[&str] = &["pages", "passes", "stride", "accesses", "seed", "cus", "chain_length", "base"];
        let (name, params) = parse_params(spec, KEYS)?;
        let get = |k: &str, default: Option<u64>| -> Result<u64> {
            params
                .iter()
                .rev()
                .find(|(key, _)| *key == k)
                .map(|&(_, v)| v)
                .or(default)
                .ok_or_else(|| Error::BadValue {
                    key: k.into(),
                    value: String::new(),
                    msg: format!("required by the `{name}` generator"),
                })
        };
        let base = Vfn(get("base", Some(DEFAULT_HEAP_BASE.0))?);
        let cus = get("cus", Some(16))? as u32;
        let pages = get("pages", None)?;
        Ok(match name {
            "sequential" => GeneratorSpec::Sequential { base, pages, passes: get("passes", Some(1))?, cus },
            "strided" => GeneratorSpec::Strided { base, pages, stride: get("stride", None)?, cus },
            "random" => GeneratorSpec::Random {
                base,
                pages,
                accesses: get("accesses", None)?,
                seed: get("seed", Some(0))?,
                cus,
            },
            "pointer_chase" | "pointer-chase" => GeneratorSpec::PointerChase {
                base,
                pages,
                chain_length: get("chain_length", Some(pages))?,
                passes: get("passes", Some(1))?,
                seed: get("seed", Some(0))?,
                cus,
            },
            _ => return Err(Error::UnknownGenerator(name.into())),
        })
    }
}
