//! Flat `key = value` sweep files.
//!
//! One setting per line; `#` starts a comment. Grid keys take a comma or
//! whitespace separated list:
//!
//! ```text
//! nf = 256, 1024
//! nc = 4096
//! np = 1, 4
//! levels = 16
//! neurons = 64
//! seeds = 0 1 2
//! steps = 2000
//! batch_size = 4096
//! lr = 0.01
//! ```
//!
//! `features`, `n_min`, `n_max` and `hidden_layers` take a single value.

use std::str::FromStr;

use cngp::HyperParams;

use crate::SweepArgs;

#[derive(Debug, Default, PartialEq)]
pub struct SweepFile {
    pub n_f: Option<Vec<u32>>,
    pub n_c: Option<Vec<u32>>,
    pub n_p: Option<Vec<u32>>,
    pub levels: Option<Vec<u32>>,
    pub neurons: Option<Vec<u32>>,
    pub seeds: Option<Vec<u64>>,
    pub features: Option<u32>,
    pub n_min: Option<u32>,
    pub n_max: Option<u32>,
    pub hidden_layers: Option<u32>,
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    let items: Result<Vec<T>, _> = value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect();
    match items {
        Ok(v) if v.is_empty() => Err(format!("{key} has no values")),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("cannot parse {key} = {value}")),
    }
}

fn single<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {key} = {value}"))
}

impl SweepFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut out = SweepFile::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let at = |e: String| format!("line {}: {e}", n + 1);
            match key {
                "nf" | "n_f" => out.n_f = Some(list(key, value).map_err(at)?),
                "nc" | "n_c" => out.n_c = Some(list(key, value).map_err(at)?),
                "np" | "n_p" => out.n_p = Some(list(key, value).map_err(at)?),
                "levels" => out.levels = Some(list(key, value).map_err(at)?),
                "neurons" => out.neurons = Some(list(key, value).map_err(at)?),
                "seeds" | "seed" => out.seeds = Some(list(key, value).map_err(at)?),
                "features" => out.features = Some(single(key, value).map_err(at)?),
                "n_min" => out.n_min = Some(single(key, value).map_err(at)?),
                "n_max" => out.n_max = Some(single(key, value).map_err(at)?),
                "hidden_layers" => out.hidden_layers = Some(single(key, value).map_err(at)?),
                "steps" => out.steps = Some(single(key, value).map_err(at)?),
                "batch_size" => out.batch_size = Some(single(key, value).map_err(at)?),
                "lr" => out.lr = Some(single(key, value).map_err(at)?),
                _ => return Err(at(format!("unknown key {key}"))),
            }
        }
        Ok(out)
    }

    pub fn override_with(&mut self, args: &SweepArgs) {
        fn set<T: Clone>(slot: &mut Option<Vec<T>>, flags: &[T]) {
            if !flags.is_empty() {
                *slot = Some(flags.to_vec());
            }
        }
        set(&mut self.n_f, &args.n_f);
        set(&mut self.n_c, &args.n_c);
        set(&mut self.n_p, &args.n_p);
        set(&mut self.levels, &args.levels);
        set(&mut self.neurons, &args.neurons);
        set(&mut self.seeds, &args.seeds);
        self.steps = args.steps.or(self.steps);
        self.batch_size = args.batch_size.or(self.batch_size);
        self.lr = args.lr.or(self.lr);
    }

    pub fn template(&self, defaults: &HyperParams) -> HyperParams {
        HyperParams {
            features: self.features.unwrap_or(defaults.features),
            n_min: self.n_min.unwrap_or(defaults.n_min),
            n_max: self.n_max.unwrap_or(defaults.n_max),
            hidden_layers: self.hidden_layers.unwrap_or(defaults.hidden_layers),
            ..*defaults
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_comments() {
        let f = SweepFile::parse("# grid\nnf = 256, 1024\nnp=1 4  # both\n\nsteps = 20\nlr = 0.005\n").unwrap();
        assert_eq!(f.n_f, Some(vec![256, 1024]));
        assert_eq!(f.n_p, Some(vec![1, 4]));
        assert_eq!(f.steps, Some(20));
        assert_eq!(f.lr, Some(0.005));
        assert_eq!(f.n_c, None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(SweepFile::parse("colour = red").unwrap_err().contains("unknown key"));
        assert!(SweepFile::parse("nf = big").unwrap_err().contains("line 1"));
        assert!(SweepFile::parse("nf =").is_err());
        assert!(SweepFile::parse("just text").is_err());
    }
}
