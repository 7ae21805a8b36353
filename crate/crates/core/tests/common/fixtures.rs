//! Hand-built tasks shared by the integration and acceptance tests.

use tagplan::graph::TaGraph;
use tagplan::instance::Instance;
use tagplan::numeric::{AssignOp, BinOp, Expr};
use tagplan::task::{Metric, NumEffect};
use tagplan::{ground_with, parse_domain, parse_problem, ActionId, FactId, GroundOptions, GroundTask, TaskBuilder};

pub fn id(inst: &Instance, name: &str) -> ActionId {
    inst.task.action_by_name(&format!("({name})")).unwrap()
}

pub fn fact(inst: &Instance, name: &str) -> FactId {
    inst.task.fact(name).unwrap()
}

/// Level 4 of the candidate graph sees p2, p5, p10 and p11 supported; `a`
/// needs p1 and p3 from a relaxed plan and threatens q of `c1`.
pub fn candidate_task() -> Instance {
    let mut b = TaskBuilder::new("rp");
    for i in 1..=15 {
        b.fact(&format!("p{i}"));
    }
    b.init(&["s0", "p9", "q", "r"]);
    b.simple("b1", 50.0, &["s0"], &["p10"], &[]);
    b.simple("b2", 170.0, &["s0"], &["p5", "p11"], &[]);
    b.simple("b3", 220.0, &["s0"], &["p2"], &[]);
    b.simple("b4", 230.0, &["s0"], &["z"], &["w"]);
    b.simple("c1", 10.0, &["q", "r"], &["done"], &[]);
    b.simple("a", 30.0, &["p1", "p2", "p3"], &["w"], &["q"]);
    b.simple("a1", 70.0, &["p4", "p5"], &["p1"], &[]);
    b.simple("a2", 10.0, &["p6"], &["p1"], &[]);
    b.simple("a3", 10.0, &["p7"], &["p1"], &[]);
    b.simple("a4", 100.0, &["p9", "p10"], &["p4", "p12"], &[]);
    b.simple("a5", 30.0, &["p11", "p12"], &["p3", "p14"], &[]);
    b.simple("a6", 30.0, &["p11", "p12"], &["p3"], &["r"]);
    b.simple("a7", 10.0, &["p14"], &["q"], &[]);
    b.simple("a8", 10.0, &["p15"], &["q"], &[]);
    b.simple("x6", 10.0, &["p4"], &["p6"], &[]);
    b.simple("x15", 10.0, &["s0"], &["p15"], &[]);
    b.goal(&["done"]);
    Instance::new(b.build())
}

pub fn candidate_graph(inst: &Instance) -> TaGraph {
    let plan: Vec<ActionId> = ["b1", "b2", "b3", "b4", "c1"].iter().map(|n| id(inst, n)).collect();
    TaGraph::from_plan(inst, &plan).unwrap()
}

/// Eight initial facts and seven actions, applied in subscript order.
pub fn seven_actions() -> GroundTask {
    let mut b = TaskBuilder::new("seven");
    b.init(&["f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8"]);
    b.simple("a1", 10.0, &["f1"], &["f1", "f9"], &[]);
    b.simple("a2", 30.0, &["f2", "f3"], &["f10", "f11"], &[]);
    b.simple("a3", 50.0, &["f4", "f5"], &["f12"], &[]);
    b.simple("a4", 50.0, &["f1", "f9", "f10"], &["f13"], &[]);
    b.simple("a5", 70.0, &["f11", "f12"], &["f14", "f15"], &[]);
    b.simple("a6", 30.0, &["f12"], &["f15", "f16"], &[]);
    b.simple("a7", 20.0, &["f13", "f14", "f16"], &["f17"], &[]);
    b.build()
}

/// Four planned actions over thirteen facts; a5 supports the missing f7 of a4.
pub fn four_actions() -> Instance {
    let mut b = TaskBuilder::new("four");
    b.init(&["f1", "f2", "f3", "f4", "f5"]);
    b.simple("a1", 50.0, &["f1"], &["f6"], &["f10"]);
    b.simple("a2", 70.0, &["f2"], &["f8", "f9", "f10"], &[]);
    b.simple("a3", 100.0, &["f9"], &["f12"], &["f10"]);
    b.simple("a4", 40.0, &["f6", "f7"], &["f12", "f13"], &["f10"]);
    b.simple("a5", 110.0, &["f8"], &["f7"], &[]);
    b.simple("a6", 10.0, &["f5"], &["f7"], &[]);
    b.fact("f11");
    b.goal(&["f12", "f13"]);
    Instance::new(b.build())
}

pub fn four_action_graph(inst: &Instance) -> TaGraph {
    let plan: Vec<ActionId> = ["a1", "a2", "a3", "a4"].iter().map(|n| id(inst, n)).collect();
    TaGraph::from_plan(inst, &plan).unwrap()
}

/// `fly plane1 city0 city1` over distance 678 with slow burn 4, under the
/// metric `total_time · total-time + 5 · total-fuel-used`.
pub fn fly_task(total_time: f64, fuel_weight: f64) -> (GroundTask, ActionId) {
    let mut b = TaskBuilder::new("zeno");
    let fuel_used = b.var("(total-fuel-used)", 0.0);
    let fly = b.blank("fly", 1.0);
    let a = b.action_mut(fly);
    a.args = vec!["plane1".into(), "city0".into(), "city1".into()];
    a.duration = Expr::bin(BinOp::Div, Expr::Const(678.0), Expr::Const(180.0));
    a.num_eff_end.push(NumEffect {
        var: fuel_used,
        op: AssignOp::Increase,
        expr: Expr::bin(BinOp::Mul, Expr::Const(678.0), Expr::Const(4.0)),
    });
    b.metric(Metric::Linear { constant: 0.0, total_time, terms: vec![(fuel_used, fuel_weight)] });
    (b.build(), fly)
}

pub fn ground_text(domain: &str, problem: &str, mutex_filter: bool) -> GroundTask {
    let d = parse_domain(domain).unwrap();
    let p = parse_problem(problem, &d).unwrap();
    ground_with(&d, &p, &GroundOptions { mutex_filter, ..GroundOptions::default() }).unwrap()
}

const BLOCKS: &str = "(define (domain blocks) (:requirements :strips :typing)
  (:types block)
  (:predicates (on ?x ?y - block) (ontable ?x - block) (clear ?x - block) (handempty) (holding ?x - block))
  (:action pick-up :parameters (?x - block)
    :precondition (and (clear ?x) (ontable ?x) (handempty))
    :effect (and (not (ontable ?x)) (not (clear ?x)) (not (handempty)) (holding ?x)))
  (:action put-down :parameters (?x - block)
    :precondition (holding ?x)
    :effect (and (not (holding ?x)) (clear ?x) (handempty) (ontable ?x)))
  (:action stack :parameters (?x ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (not (holding ?x)) (not (clear ?y)) (clear ?x) (handempty) (on ?x ?y)))
  (:action unstack :parameters (?x ?y - block)
    :precondition (and (on ?x ?y) (clear ?x) (handempty))
    :effect (and (holding ?x) (clear ?y) (not (clear ?x)) (not (handempty)) (not (on ?x ?y)))))";

const BLOCKS_PROBLEM: &str = "(define (problem three) (:domain blocks)
  (:objects a b c - block)
  (:init (clear a) (on a b) (ontable b) (clear c) (ontable c) (handempty))
  (:goal (and (on b c) (on c a))))";

const GRIPPER: &str = "(define (domain gripper) (:requirements :strips :typing)
  (:types room ball)
  (:predicates (at-robby ?r - room) (at ?b - ball ?r - room) (free) (carry ?b - ball))
  (:action move :parameters (?from ?to - room)
    :precondition (at-robby ?from)
    :effect (and (at-robby ?to) (not (at-robby ?from))))
  (:action pick :parameters (?b - ball ?r - room)
    :precondition (and (at ?b ?r) (at-robby ?r) (free))
    :effect (and (carry ?b) (not (at ?b ?r)) (not (free))))
  (:action drop :parameters (?b - ball ?r - room)
    :precondition (and (carry ?b) (at-robby ?r))
    :effect (and (at ?b ?r) (free) (not (carry ?b)))))";

const GRIPPER_PROBLEM: &str = "(define (problem two-balls) (:domain gripper)
  (:objects left right - room b1 b2 - ball)
  (:init (at-robby left) (at b1 left) (at b2 left) (free))
  (:goal (and (at b1 right) (at b2 right))))";

const SWITCH: &str = "(define (domain switch) (:requirements :strips :negative-preconditions)
  (:predicates (on ?l) (lit ?l) (done))
  (:constants l1 l2)
  (:action turn-on :parameters (?l) :precondition (not (on ?l)) :effect (on ?l))
  (:action turn-off :parameters (?l) :precondition (on ?l) :effect (not (on ?l)))
  (:action light :parameters (?l) :precondition (on ?l) :effect (lit ?l))
  (:action finish :parameters () :precondition (and (lit l1) (lit l2) (not (on l1))) :effect (done)))";

const SWITCH_PROBLEM: &str = "(define (problem lights) (:domain switch) (:init) (:goal (done)))";

/// Small tasks whose reachable state spaces the exhaustive oracle can enumerate.
pub fn mutex_tasks() -> Vec<(&'static str, GroundTask)> {
    let mut out = Vec::new();

    let mut b = TaskBuilder::new("toggle");
    b.init(&["p"]);
    b.simple("set", 1.0, &["p"], &["not-p"], &["p"]);
    b.simple("unset", 1.0, &["not-p"], &["p"], &["not-p"]);
    out.push(("toggle", b.build()));

    let mut b = TaskBuilder::new("withdrawn");
    b.init(&["p"]);
    b.simple("b", 1.0, &["p"], &["q"], &[]);
    b.simple("c", 1.0, &["p"], &["f"], &["q"]);
    out.push(("withdrawn", b.build()));

    let mut b = TaskBuilder::new("ring");
    b.init(&["at0", "token"]);
    for i in 0..4 {
        let j = (i + 1) % 4;
        b.simple(&format!("step{i}"), 1.0, &[&format!("at{i}")], &[&format!("at{j}")], &[&format!("at{i}")]);
    }
    b.simple("spend", 1.0, &["token", "at2"], &["spent"], &["token"]);
    out.push(("ring", b.build()));

    out.push(("blocks", ground_text(BLOCKS, BLOCKS_PROBLEM, false)));
    out.push(("gripper", ground_text(GRIPPER, GRIPPER_PROBLEM, false)));
    out.push(("switch", ground_text(SWITCH, SWITCH_PROBLEM, false)));
    out
}

/// (P, not-P) pairs introduced when compiling away negative preconditions.
pub fn complement_pairs(task: &GroundTask) -> Vec<(FactId, FactId)> {
    let mut out = Vec::new();
    for (i, name) in task.facts.iter().enumerate() {
        if let Some(inner) = name.strip_prefix("(not-") {
            if let Some(p) = task.fact(&format!("({inner}")) {
                out.push((p, FactId(i)));
            }
        }
    }
    out
}

/// A random STRIPS action over at most eight facts: masks of its
/// preconditions, add and delete effects, and its duration.
#[derive(Debug, Clone)]
pub struct RandomAction {
    pub pre: u8,
    pub add: u8,
    pub del: u8,
    pub duration: u8,
}

fn names(mask: u8) -> Vec<String> {
    (0..8).filter(|i| mask & (1 << i) != 0).map(|i| format!("f{i}")).collect()
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

/// Builds the task with the given initial state, goals and actions.
pub fn random_task(init: u8, goals: u8, actions: &[RandomAction]) -> GroundTask {
    let mut b = TaskBuilder::new("random");
    for i in 0..8 {
        b.fact(&format!("f{i}"));
    }
    let init = names(init);
    b.init(&strs(&init));
    for (k, a) in actions.iter().enumerate() {
        let (pre, add) = (names(a.pre), names(a.add & !a.del));
        let del = names(a.del);
        b.simple(&format!("a{k}"), f64::from(a.duration.max(1)), &strs(&pre), &strs(&add), &strs(&del));
    }
    let goals = names(goals);
    b.goal(&strs(&goals));
    b.build()
}
