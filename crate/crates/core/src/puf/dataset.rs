//! Challenge-response datasets and their text file format.
//!
//! ```text
//! # puf_seed=7 sigma=0.1 cal_seed=7 gen_seed=1 count=2
//! 00A3F1,7C0012
//! FFFFFF,000000
//! ```
//!
//! Lines starting with `#` are comments; exactly one of them is the header
//! above. Each data line is six uppercase hex digits of challenge, a comma,
//! six of response.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::PufRealization;
use crate::codec::VALUE_SPACE;
use crate::error::{Error, Result};
use crate::io_util;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Crp {
    pub challenge: u32,
    pub response: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrpDataset {
    pub puf_seed: u64,
    pub sigma: f64,
    pub cal_seed: u64,
    pub generation_seed: u64,
    crps: Vec<Crp>,
}

impl CrpDataset {
    pub fn new(
        puf_seed: u64,
        sigma: f64,
        cal_seed: u64,
        generation_seed: u64,
        crps: Vec<Crp>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(crps.len());
        for crp in &crps {
            if u64::from(crp.challenge) >= VALUE_SPACE || u64::from(crp.response) >= VALUE_SPACE {
                return Err(Error::invalid(format!("CRP {crp:?} exceeds 24 bits")));
            }
            if !seen.insert(crp.challenge) {
                return Err(Error::invalid(format!(
                    "duplicate challenge {:06X}",
                    crp.challenge
                )));
            }
        }
        Ok(Self {
            puf_seed,
            sigma,
            cal_seed,
            generation_seed,
            crps,
        })
    }

    pub fn crps(&self) -> &[Crp] {
        &self.crps
    }

    pub fn len(&self) -> usize {
        self.crps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crps.is_empty()
    }

    pub fn challenges(&self) -> impl Iterator<Item = u32> + '_ {
        self.crps.iter().map(|c| c.challenge)
    }

    pub fn responses(&self) -> impl Iterator<Item = u32> + '_ {
        self.crps.iter().map(|c| c.response)
    }

    pub fn challenge_set(&self) -> HashSet<u32> {
        self.challenges().collect()
    }

    pub fn header(&self) -> String {
        format!(
            "# puf_seed={} sigma={} cal_seed={} gen_seed={} count={}",
            self.puf_seed,
            self.sigma,
            self.cal_seed,
            self.generation_seed,
            self.crps.len()
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(14 * (self.crps.len() + 4));
        out.push_str(&self.header());
        out.push('\n');
        for c in &self.crps {
            writeln!(out, "{:06X},{:06X}", c.challenge, c.response).expect("string write");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Option<(usize, Header)> = None;
        let mut crps = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in text.split_terminator('\n').enumerate() {
            let lineno = idx + 1;
            if let Some(comment) = line.strip_prefix('#') {
                if comment.trim_start().starts_with("puf_seed=") {
                    if header.is_some() {
                        return Err(Error::parse(lineno, "second header line"));
                    }
                    header = Some((lineno, Header::parse(comment, lineno)?));
                }
                continue;
            }
            let crp = parse_crp_line(line, lineno)?;
            if !seen.insert(crp.challenge) {
                return Err(Error::parse(
                    lineno,
                    format!("duplicate challenge {:06X}", crp.challenge),
                ));
            }
            crps.push(crp);
        }
        let (hline, h) = header.ok_or_else(|| Error::parse(1, "missing '# puf_seed=...' header"))?;
        if h.count != crps.len() {
            return Err(Error::parse(
                hline,
                format!("header count {} but {} data lines", h.count, crps.len()),
            ));
        }
        Ok(Self {
            puf_seed: h.puf_seed,
            sigma: h.sigma,
            cal_seed: h.cal_seed,
            generation_seed: h.gen_seed,
            crps,
        })
    }
}

struct Header {
    puf_seed: u64,
    sigma: f64,
    cal_seed: u64,
    gen_seed: u64,
    count: usize,
}

impl Header {
    fn parse(body: &str, line: usize) -> Result<Self> {
        const KEYS: [&str; 5] = ["puf_seed", "sigma", "cal_seed", "gen_seed", "count"];
        let mut values: [Option<&str>; 5] = [None; 5];
        for field in body.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::parse(line, format!("header field {field:?} lacks '='")))?;
            let slot = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| Error::parse(line, format!("unknown header key {key:?}")))?;
            if values[slot].replace(value).is_some() {
                return Err(Error::parse(line, format!("repeated header key {key:?}")));
            }
        }
        let get = |i: usize| values[i].ok_or_else(|| Error::parse(line, format!("header lacks {}", KEYS[i])));
        let int = |i: usize| -> Result<u64> {
            get(i)?
                .parse()
                .map_err(|_| Error::parse(line, format!("bad integer for {}", KEYS[i])))
        };
        let sigma: f64 = get(1)?
            .parse()
            .map_err(|_| Error::parse(line, "bad decimal for sigma"))?;
        Ok(Self {
            puf_seed: int(0)?,
            sigma,
            cal_seed: int(2)?,
            gen_seed: int(3)?,
            count: usize::try_from(int(4)?).map_err(|_| Error::parse(line, "count too large"))?,
        })
    }
}

fn parse_hex6(field: &str, line: usize) -> Result<u32> {
    let ok = field.len() == 6
        && field
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b));
    if !ok {
        return Err(Error::parse(
            line,
            format!("{field:?} is not six uppercase hex digits"),
        ));
    }
    Ok(u32::from_str_radix(field, 16).expect("validated hex"))
}

fn parse_crp_line(line: &str, lineno: usize) -> Result<Crp> {
    let (c, r) = line
        .split_once(',')
        .ok_or_else(|| Error::parse(lineno, "expected CHALLENGE,RESPONSE"))?;
    Ok(Crp {
        challenge: parse_hex6(c, lineno)?,
        response: parse_hex6(r, lineno)?,
    })
}

pub fn write_dataset(ds: &CrpDataset, path: &Path) -> Result<()> {
    io_util::write_atomic(path, ds.to_text().as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<CrpDataset> {
    CrpDataset::parse(&io_util::read_to_string(path)?)
}

/// Dense bit set over the 2^24 challenge space.
struct ChallengeSet {
    words: Vec<u64>,
}

impl ChallengeSet {
    fn new() -> Self {
        Self {
            words: vec![0; (VALUE_SPACE / 64) as usize],
        }
    }

    /// Returns true if `c` was not already present.
    fn insert(&mut self, c: u32) -> bool {
        let (w, b) = ((c / 64) as usize, c % 64);
        let fresh = self.words[w] & (1 << b) == 0;
        self.words[w] |= 1 << b;
        fresh
    }
}

/// Samples `count` distinct challenges uniformly from the 24-bit space,
/// skipping `exclude`, and answers them with `puf`.
pub fn generate_dataset(
    puf: &PufRealization,
    count: usize,
    gen_seed: u64,
    exclude: &HashSet<u32>,
) -> Result<CrpDataset> {
    let challenges = sample_challenges(count, gen_seed, exclude)?;
    let crps = challenges
        .into_iter()
        .map(|challenge| {
            Ok(Crp {
                challenge,
                response: puf.evaluate(challenge)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cal_seed = puf.calibration().map_or(0, |c| c.cal_seed);
    Ok(CrpDataset {
        puf_seed: puf.seed(),
        sigma: puf.sigma(),
        cal_seed,
        generation_seed: gen_seed,
        crps,
    })
}

pub(crate) fn sample_challenges(count: usize, gen_seed: u64, exclude: &HashSet<u32>) -> Result<Vec<u32>> {
    let space = VALUE_SPACE as usize;
    let excluded = exclude.iter().filter(|&&c| (c as usize) < space).count();
    if count > space - excluded {
        return Err(Error::ExhaustedDomain(format!(
            "{count} challenges requested, {} available",
            space - excluded
        )));
    }
    let mut rng = rng::stream(gen_seed, "challenges", 0);
    if count == 0 {
        return Ok(Vec::new());
    }
    if count + excluded <= space / 2 {
        let mut taken = ChallengeSet::new();
        for &c in exclude {
            if (c as usize) < space {
                taken.insert(c);
            }
        }
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let c = rng.random_range(0..VALUE_SPACE as u32);
            if taken.insert(c) {
                out.push(c);
            }
        }
        Ok(out)
    } else {
        // Dense request: partial Fisher-Yates over the allowed values.
        let mut pool: Vec<u32> = (0..VALUE_SPACE as u32).filter(|c| !exclude.contains(c)).collect();
        for i in 0..count {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(count);
        Ok(pool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puf::realize_puf;

    fn small_ds() -> CrpDataset {
        let crps = vec![
            Crp { challenge: 0, response: 0xFFFFFF },
            Crp { challenge: 0xABCDEF, response: 0x123456 },
            Crp { challenge: 0xFFFFFF, response: 0 },
        ];
        CrpDataset::new(7, 0.1, 7, 3, crps).unwrap()
    }

    #[test]
    fn text_round_trip() {
        let ds = small_ds();
        let text = ds.to_text();
        assert!(text.ends_with("FFFFFF,000000\n"));
        assert!(text.starts_with("# puf_seed=7 sigma=0.1 cal_seed=7 gen_seed=3 count=3\n"));
        assert_eq!(CrpDataset::parse(&text).unwrap(), ds);
    }

    #[test]
    fn parses_hex_line() {
        let ds = CrpDataset::parse("# puf_seed=1 sigma=0.1 cal_seed=1 gen_seed=0 count=1\nFFFFFF,000000\n").unwrap();
        assert_eq!(ds.crps(), &[Crp { challenge: 16_777_215, response: 0 }]);
    }

    fn parse_err_line(text: &str) -> usize {
        match CrpDataset::parse(text) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let h = "# puf_seed=1 sigma=0.1 cal_seed=1 gen_seed=0 count=1\n";
        assert_eq!(parse_err_line(&format!("{h}1000000,0\n")), 2);
        assert_eq!(parse_err_line(&format!("{h}# note\nabcdef,000000\n")), 3);
        assert_eq!(parse_err_line(&format!("{h}000001\n")), 2);
        assert_eq!(parse_err_line(&format!("{h}000001,00000G\n")), 2);
        assert_eq!(parse_err_line("000001,000002\n"), 1);
        let dup = "# puf_seed=1 sigma=0.1 cal_seed=1 gen_seed=0 count=2\n000001,000002\n000001,000003\n";
        assert_eq!(parse_err_line(dup), 3);
        let short = "# puf_seed=1 sigma=0.1 cal_seed=1 gen_seed=0 count=5\n000001,000002\n";
        assert_eq!(parse_err_line(short), 1);
        assert_eq!(parse_err_line("# puf_seed=x sigma=0.1 cal_seed=1 gen_seed=0 count=0\n"), 1);
    }

    #[test]
    fn generation_properties() {
        let puf = realize_puf(3, 0.1).unwrap();
        let none = HashSet::new();
        assert!(generate_dataset(&puf, 0, 1, &none).unwrap().is_empty());

        let first = generate_dataset(&puf, 100, 1, &none).unwrap();
        let excl = first.challenge_set();
        let second = generate_dataset(&puf, 100, 1, &excl).unwrap();
        assert!(second.challenges().all(|c| !excl.contains(&c)));

        let a = generate_dataset(&puf, 100_000, 5, &none).unwrap();
        let b = generate_dataset(&puf, 100_000, 5, &none).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.challenge_set().len(), a.len());
    }

    #[test]
    fn dense_sampling_excludes_everything_requested() {
        let exclude: HashSet<u32> = (0..(1 << 23) + 5).collect();
        let picked = sample_challenges(1000, 2, &exclude).unwrap();
        assert_eq!(picked.len(), 1000);
        assert!(picked.iter().all(|c| !exclude.contains(c)));
        let unique: HashSet<_> = picked.iter().collect();
        assert_eq!(unique.len(), 1000);
    }

    #[test]
    fn exhausted_domain() {
        assert!(matches!(
            sample_challenges((VALUE_SPACE + 1) as usize, 0, &HashSet::new()),
            Err(Error::ExhaustedDomain(_))
        ));
        let exclude: HashSet<u32> = (0..10).collect();
        assert!(matches!(
            sample_challenges(VALUE_SPACE as usize - 9, 0, &exclude),
            Err(Error::ExhaustedDomain(_))
        ));
    }
}
