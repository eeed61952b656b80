//! Builds a small cluster, checks it, edits it and round-trips it through JSON.

use geoplan::graph::{parse_cluster, ClusterGraph, CommEdge, MachineNode};

fn main() -> geoplan::Result<()> {
    let nodes = vec![
        MachineNode::new(0, "Beijing", 8.6, 152.0),
        MachineNode::new(1, "Nanjing", 8.0, 320.0),
        MachineNode::new(2, "California", 8.0, 640.0),
    ];
    let edges = vec![
        CommEdge::new(0, 1, 30.0),
        CommEdge::new(0, 2, 89.1),
        CommEdge::new(1, 2, 97.9),
    ];
    let g = ClusterGraph::from_parts(nodes, edges)?;
    println!("{} machines, {:.0} GB in total", g.len(), g.total_memory());
    println!("latency 0-2: {:?} ms per 64 bytes", g.latency(0, 2));

    let grown = g.add_machine(MachineNode::new(3, "Tokyo", 7.0, 256.0), &[(2, 118.8)])?;
    let path = grown.shortest_path_latency(0, 3).unwrap_or(f64::INFINITY);
    println!("after adding Tokyo: {} machines, 0-3 path {path:.1} ms", grown.len());

    let text = grown.to_canonical_json();
    let back = parse_cluster(&text)?;
    assert_eq!(back, grown);
    println!("canonical JSON round trip ok ({} bytes)", text.len());

    let broken = r#"{"nodes":[{"id":0,"region":"Rome","compute":7.0,"memory_gb":128.0}],
                     "edges":[{"a":0,"b":0,"ms_per_64b":1.0}]}"#;
    for v in geoplan::graph::parse_cluster_document(broken)?.violations() {
        println!("violation: {v}");
    }
    Ok(())
}
