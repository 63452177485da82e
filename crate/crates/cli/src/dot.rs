use std::fmt::Write;

use comove::atoms::Strength;
use comove::molecules::{BondKind, Molecule};

/// Inches of node width per square root of member count, so node area
/// grows linearly with atom size.
const WIDTH_PER_ROOT: f64 = 0.35;

/// Render a molecule as an undirected Graphviz graph.
///
/// Nodes are atoms, sorted by id. Strong atoms get a solid outline, weak
/// atoms a dashed one and unclassified candidates a dotted one. Shaded atoms
/// are filled gray. Thick bonds draw with penwidth 2, thin with penwidth 1,
/// dashed bonds dashed.
pub fn export_dot(molecule: &Molecule) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "graph molecule_{} {{", molecule.id);
    let _ = writeln!(s, "  node [shape=circle, fixedsize=true];");
    let mut nodes: Vec<_> = molecule.nodes.iter().collect();
    nodes.sort_by_key(|n| n.id);
    for n in nodes {
        let outline = match n.strength {
            Strength::Strong => "solid",
            Strength::Weak => "dashed",
            Strength::Candidate => "dotted",
        };
        let width = WIDTH_PER_ROOT * (n.size as f64).sqrt();
        let fill = if n.shaded {
            format!("\"filled,{outline}\", fillcolor=gray")
        } else {
            outline.to_string()
        };
        let _ = writeln!(
            s,
            "  a{id} [label=\"{id}\\n({size})\", width={width:.3}, height={width:.3}, style={fill}];",
            id = n.id,
            size = n.size,
        );
    }
    let mut bonds: Vec<_> = molecule.bonds.iter().collect();
    bonds.sort_by_key(|b| (b.a.min(b.b), b.a.max(b.b)));
    for b in bonds {
        let attrs = match b.kind {
            BondKind::Thick => "penwidth=2",
            BondKind::Thin => "penwidth=1",
            BondKind::Dashed => "style=dashed",
        };
        let _ = writeln!(s, "  a{} -- a{} [{attrs}];", b.a.min(b.b), b.a.max(b.b));
    }
    s.push_str("}\n");
    s
}
