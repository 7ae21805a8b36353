//! Independent recomputation of action end times as longest paths.

use petgraph::algo::toposort;
use petgraph::graph::{DiGraph, NodeIndex};
use tagplan::graph::{Supporter, TaGraph};
use tagplan::instance::Instance;
use tagplan::task::eval_duration;
use tagplan::FactId;

/// End time of every action level, from durations, supporters and Ω alone.
/// Panics when the ordering constraints contain a cycle.
pub fn longest_path_times(inst: &Instance, g: &TaGraph) -> Vec<Option<f64>> {
    let n = g.n_levels();
    let mut dag: DiGraph<usize, ()> = DiGraph::new();
    let nodes: Vec<NodeIndex> = (0..n).map(|l| dag.add_node(l)).collect();
    for c in g.omega() {
        dag.add_edge(nodes[c.before], nodes[c.after], ());
    }
    for (k, _) in g.actions() {
        for node in g.nodes_at(k) {
            for s in &node.supporters {
                if let Supporter::Level(j) = s {
                    dag.add_edge(nodes[*j], nodes[k], ());
                }
            }
        }
    }
    let order = toposort(&dag, None).expect("ordering constraints are acyclic");
    let mut end: Vec<Option<f64>> = vec![None; n];
    let mut dur = vec![0.0; n];
    for idx in order {
        let k = dag[idx];
        let Some(a) = g.action_at(k) else { continue };
        let act = inst.task.action(a);
        let d = eval_duration(act, g.values(k)).expect("duration evaluates");
        dur[k] = d;
        let mut start = 0.0f64;
        for c in g.predecessors(k) {
            start = start.max(end[c.before].expect("predecessor scheduled first"));
        }
        for node in g.nodes_at(k) {
            let t = if node.supporters.is_empty() {
                inst.default_time(node.fact)
            } else {
                node.supporters
                    .iter()
                    .map(|s| supporter_time(inst, g, &end, &dur, *s, node.fact))
                    .fold(f64::INFINITY, f64::min)
            };
            let needed_from_start = act.pre_start.contains(&node.fact) || act.pre_overall.contains(&node.fact);
            start = start.max(if needed_from_start { t } else { t - d });
        }
        end[k] = Some(start + d);
    }
    end
}

fn supporter_time(inst: &Instance, g: &TaGraph, end: &[Option<f64>], dur: &[f64], s: Supporter, f: FactId) -> f64 {
    match s {
        Supporter::Start => 0.0,
        Supporter::Level(j) => {
            let b = inst.task.action(g.action_at(j).unwrap());
            let t = end[j].expect("supporter scheduled first");
            if b.add_start.contains(&f) && !b.add_end.contains(&f) {
                t - dur[j]
            } else {
                t
            }
        }
    }
}

/// Largest disagreement between the graph's stored times and the oracle.
pub fn max_time_error(inst: &Instance, g: &TaGraph) -> f64 {
    let oracle = longest_path_times(inst, g);
    let mut err = 0.0f64;
    for (k, _) in g.actions() {
        err = err.max((oracle[k].unwrap() - g.time(k).unwrap()).abs());
    }
    let makespan = oracle.iter().flatten().fold(0.0f64, |m, t| m.max(*t));
    err.max((makespan - g.makespan()).abs())
}
