//! Turning command line flags into a scenario.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ergodic_core::{GraphSpec, Scenario};

/// Builtin name or path to a TOML scenario file.
pub fn load_scenario(spec: &str) -> Result<Scenario> {
    if let Ok(s) = Scenario::builtin(spec) {
        return Ok(s);
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("`{spec}` is neither a builtin scenario (volcano, archipelago) nor a readable file");
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Parses `complete`, an edge list `0-1,1-2`, or `random:[n,]p,seed`.
pub fn parse_graph(text: &str) -> Result<GraphSpec> {
    let text = text.trim();
    if text == "complete" {
        return Ok(GraphSpec::Complete);
    }
    if let Some(args) = text.strip_prefix("random:") {
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        let (n, p, seed) = match parts.as_slice() {
            [p, seed] => (None, *p, *seed),
            [n, p, seed] => (Some(n.parse().with_context(|| format!("graph size `{n}`"))?), *p, *seed),
            _ => bail!("random graph must be `random:n,p,seed` or `random:p,seed`"),
        };
        let p = p.parse().with_context(|| format!("edge probability `{p}`"))?;
        let seed = seed.parse().with_context(|| format!("graph seed `{seed}`"))?;
        return Ok(GraphSpec::Random { n, p, seed });
    }
    let edges = text
        .split(',')
        .map(|e| {
            let (a, b) = e.trim().split_once('-').with_context(|| format!("edge `{e}` is not of the form a-b"))?;
            Ok((a.trim().parse()?, b.trim().parse()?))
        })
        .collect::<Result<Vec<(usize, usize)>>>()
        .with_context(|| format!("graph `{text}`"))?;
    Ok(GraphSpec::Edges(edges))
}

/// Inclusive agent range `a..b`, `a..=b` or a single count.
pub fn parse_range(text: &str) -> Result<Vec<usize>> {
    let parse = |s: &str| s.trim().parse::<usize>().with_context(|| format!("agent count `{s}`"));
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.strip_prefix('=').unwrap_or(b))?),
        None => {
            let n = parse(text)?;
            (n, n)
        }
    };
    if lo == 0 || hi < lo {
        bail!("agent range `{text}` must be non-empty and start at 1 or more");
    }
    Ok((lo..=hi).collect())
}

/// Scenario fields that can be replaced from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub agents: Option<usize>,
    pub seed: Option<u64>,
    pub epsilon_opt: Option<f64>,
    pub r_penalty: Option<f64>,
    pub i_max: Option<usize>,
    pub graph: Option<GraphSpec>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) {
        if let Some(n) = self.agents {
            s.run.agents = n;
        }
        if let Some(seed) = self.seed {
            s.run.seed = seed;
        }
        if let Some(e) = self.epsilon_opt {
            s.run.epsilon_opt = e;
        }
        if let Some(r) = self.r_penalty {
            s.weights.r = r;
        }
        if let Some(i) = self.i_max {
            s.weights.i_max = i;
        }
        if let Some(g) = &self.graph {
            s.graph = g.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graphs() {
        assert_eq!(parse_graph("complete").unwrap(), GraphSpec::Complete);
        assert_eq!(parse_graph("0-1, 1-2").unwrap(), GraphSpec::Edges(vec![(0, 1), (1, 2)]));
        assert_eq!(parse_graph("random:5,0.4,9").unwrap(), GraphSpec::Random { n: Some(5), p: 0.4, seed: 9 });
        assert_eq!(parse_graph("random:0.4,9").unwrap(), GraphSpec::Random { n: None, p: 0.4, seed: 9 });
        assert!(parse_graph("0:1").is_err());
        assert!(parse_graph("random:1").is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_range("2..=4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_range("5").unwrap(), vec![5]);
        assert!(parse_range("0..2").is_err());
        assert!(parse_range("3..1").is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut s = Scenario::volcano();
        Overrides { agents: Some(2), r_penalty: Some(3.0), i_max: Some(4), ..Default::default() }.apply(&mut s);
        assert_eq!((s.run.agents, s.weights.r, s.weights.i_max), (2, 3.0, 4));
        assert_eq!(s.run.seed, Scenario::volcano().run.seed);
    }

    #[test]
    fn unknown_scenarios() {
        assert!(load_scenario("volcano").is_ok());
        assert!(load_scenario("/nonexistent/x.toml").is_err());
    }
}
