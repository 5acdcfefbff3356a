//! Edge-list text format.
//!
//! ```text
//! # comment
//! 3
//! 0 1 1.0
//! 1 2 1.0
//! source 0
//! sink 2
//! ```
//!
//! The first non-comment line holds the node count, then one `u v w` triple
//! per line, then `source <id>` and `sink <id>`. `#` starts a comment
//! anywhere on a line; blank lines are ignored.

use std::fmt::Write as _;

use crate::graph::{GraphError, WeightedGraph};
use crate::scalar::Scalar;

fn syntax(line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Syntax { line, message: message.into() }
}

fn parse_id(token: &str, line: usize, what: &str) -> Result<usize, GraphError> {
    token
        .parse::<usize>()
        .map_err(|_| syntax(line, format!("invalid {what} `{token}`")))
}

pub fn parse_graph<T: Scalar>(text: &str) -> Result<WeightedGraph<T>, GraphError> {
    let mut n: Option<usize> = None;
    let mut edges = Vec::new();
    let mut source = None;
    let mut sink = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();

        if n.is_none() {
            if tokens.len() != 1 {
                return Err(syntax(line, "expected node count on its own line"));
            }
            n = Some(parse_id(tokens[0], line, "node count")?);
            continue;
        }

        match tokens.as_slice() {
            [kw @ ("source" | "sink"), id] => {
                let id = parse_id(id, line, kw)?;
                let slot = if *kw == "source" { &mut source } else { &mut sink };
                if slot.replace(id).is_some() {
                    return Err(syntax(line, format!("`{kw}` declared twice")));
                }
            }
            [u, v, w] => {
                if source.is_some() || sink.is_some() {
                    return Err(syntax(line, "edge listed after source/sink declarations"));
                }
                let u = parse_id(u, line, "node id")?;
                let v = parse_id(v, line, "node id")?;
                let w: f64 = w
                    .parse()
                    .map_err(|_| syntax(line, format!("invalid weight `{w}`")))?;
                edges.push((u, v, T::lit(w)));
            }
            _ => return Err(syntax(line, format!("unrecognized line `{content}`"))),
        }
    }

    let n = n.ok_or_else(|| syntax(last_line, "missing node count"))?;
    let source = source.ok_or_else(|| syntax(last_line, "missing `source` line"))?;
    let sink = sink.ok_or_else(|| syntax(last_line, "missing `sink` line"))?;
    WeightedGraph::new(n, edges, source, sink)
}

/// Writes a graph in the edge-list format. Weights use the shortest decimal
/// that reads back to the same `f64`.
pub fn serialize_graph<T: Scalar>(g: &WeightedGraph<T>) -> String {
    let mut out = String::new();
    writeln!(out, "{}", g.n()).unwrap();
    for e in g.edges() {
        writeln!(out, "{} {} {:?}", e.u, e.v, e.w.to_f64_lossy()).unwrap();
    }
    writeln!(out, "source {}", g.source()).unwrap();
    writeln!(out, "sink {}", g.sink()).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_document() {
        let g: WeightedGraph<f64> = parse_graph("2\n0 1 1.0\nsource 0\nsink 1").unwrap();
        assert_eq!((g.n(), g.m(), g.source(), g.sink()), (2, 1, 0, 1));
        assert_eq!(g.weight(0, 1), 1.0);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# path\n3   # nodes\n\n0 1 1.0\n1 2 2.5 # heavy\nsource 0\nsink 2\n";
        let g: WeightedGraph<f64> = parse_graph(text).unwrap();
        assert_eq!(g.weight(2, 1), 2.5);
    }

    #[test]
    fn semantic_errors_propagate() {
        let err = parse_graph::<f64>("2\n0 1 -1.0\nsource 0\nsink 1").unwrap_err();
        assert!(matches!(err, GraphError::NonPositiveWeight { .. }));
        let err = parse_graph::<f64>("3\n0 1 1.0\nsource 0\nsink 2").unwrap_err();
        assert!(matches!(err, GraphError::Disconnected { .. }));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_graph::<f64>("2\n0 1 abc\nsource 0\nsink 1").unwrap_err();
        assert_eq!(err, GraphError::Syntax { line: 2, message: "invalid weight `abc`".into() });
        let err = parse_graph::<f64>("2\n0 1 1.0\nsource 0\n").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 3, .. }));
        let err = parse_graph::<f64>("2 3\n").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 1, .. }));
        let err = parse_graph::<f64>("2\n0 1\n").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 2, .. }));
        let err = parse_graph::<f64>("2\n0 1 1\nsource 0\nsource 1\nsink 1").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 4, .. }));
        let err = parse_graph::<f64>("").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { .. }));
    }

    #[test]
    fn path_round_trip() {
        let g = WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)], 0, 2).unwrap();
        let text = serialize_graph(&g);
        assert_eq!(text, "3\n0 1 1.0\n1 2 1.0\nsource 0\nsink 2\n");
        assert_eq!(parse_graph::<f64>(&text).unwrap(), g);
    }

    proptest! {
        #[test]
        fn round_trip_preserves_graph(
            n in 2usize..9,
            weights in proptest::collection::vec(1e-3f64..1e3, 8),
            extra in proptest::collection::vec((0usize..9, 0usize..9, 1e-3f64..1e3), 0..12),
            flip in any::<bool>(),
        ) {
            // spanning path keeps it connected; extras are deduplicated
            let mut edges: Vec<(usize, usize, f64)> =
                (0..n - 1).map(|i| (i, i + 1, weights[i])).collect();
            for (a, b, w) in extra {
                let (a, b) = (a % n, b % n);
                if a != b && !edges.iter().any(|&(x, y, _)| (x.min(y), x.max(y)) == (a.min(b), a.max(b))) {
                    edges.push(if flip { (b, a, w) } else { (a, b, w) });
                }
            }
            let g = WeightedGraph::new(n, edges, n - 1, 0).unwrap();
            let back = parse_graph::<f64>(&serialize_graph(&g)).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
