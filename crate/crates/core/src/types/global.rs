//! Conversion from final-time local types to global types, and evaluation
//! of formulas directly on a global type.

use std::collections::HashMap;

use crate::err::{EngineError, LogicError};
use crate::logic::Formula;
use crate::types::arena::{
    BitRel, GlobalArena, GlobalId, GlobalNode, GlobalPayload, Payload, TypeArena, TypeId,
};

/// Strips the part bookkeeping from a local type taken at the final time
/// (single-part partition). Errors if any tuple position sits in a
/// different part — the telltale of a type from an earlier time.
pub fn to_global_type(
    local: &TypeArena,
    global: &GlobalArena,
    memo: &mut HashMap<TypeId, GlobalId>,
    id: TypeId,
) -> Result<GlobalId, EngineError> {
    if let Some(&out) = memo.get(&id) {
        return Ok(out);
    }
    let node = local.node(id);
    if node.parts.windows(2).any(|w| w[0] != w[1]) {
        return Err(EngineError::Precondition(format!(
            "local type spans parts {:?}; only final-time types translate to global types",
            node.parts
        )));
    }
    let out = match &node.payload {
        Payload::Atomic { eq, adj } => global.intern(GlobalNode {
            rank: 0,
            arity: node.arity() as u8,
            payload: GlobalPayload::Atomic { eq: *eq, adj: *adj },
        }),
        Payload::Members(members) => {
            let mut mapped = Vec::with_capacity(members.len());
            for &m in members {
                mapped.push(to_global_type(local, global, memo, m)?);
            }
            mapped.sort_unstable();
            mapped.dedup();
            global.intern(GlobalNode {
                rank: node.rank,
                arity: node.arity() as u8,
                payload: GlobalPayload::Members(mapped),
            })
        }
    };
    memo.insert(id, out);
    Ok(out)
}

/// Assembles the rank-`q` sentence-level type of the whole graph from the
/// realized singleton rank-(q−1) local types at the final time.
pub fn sentence_type(
    local: &TypeArena,
    global: &GlobalArena,
    q: u8,
    singles: &[TypeId],
) -> Result<GlobalId, EngineError> {
    assert!(q >= 1);
    let mut memo = HashMap::new();
    let mut members = Vec::with_capacity(singles.len());
    for &id in singles {
        let node = local.node(id);
        assert_eq!(node.rank, q - 1, "sentence type needs rank q-1 singles");
        assert_eq!(node.arity(), 1);
        members.push(to_global_type(local, global, &mut memo, id)?);
    }
    members.sort_unstable();
    members.dedup();
    Ok(global.intern(GlobalNode { rank: q, arity: 0, payload: GlobalPayload::Members(members) }))
}

pub fn atomic_of(global: &GlobalArena, id: GlobalId) -> (BitRel, BitRel) {
    // The atomic type of a prefix tuple is readable from any extension
    // chain; positions past the original arity are simply ignored.
    let mut cur = id;
    loop {
        let node = global.node(cur);
        match &node.payload {
            GlobalPayload::Atomic { eq, adj } => return (*eq, *adj),
            GlobalPayload::Members(m) => cur = m[0],
        }
    }
}

/// Decides `phi` on a global type whose tuple positions correspond to the
/// lexicographically sorted free variables of `phi`.
pub fn eval_on_type(global: &GlobalArena, id: GlobalId, phi: &Formula) -> Result<bool, LogicError> {
    let vars = phi.free_vars();
    let node = global.node(id);
    if vars.len() != node.arity as usize {
        return Err(LogicError::VariableMismatch {
            formula: vars,
            engine: (0..node.arity).map(|i| format!("#{i}")).collect(),
        });
    }
    if phi.rank() > node.rank as u32 {
        return Err(LogicError::RankTooLow { formula: phi.rank(), available: node.rank as u32 });
    }
    let env: HashMap<String, usize> = vars.into_iter().zip(0..).collect();
    Ok(eval(global, id, phi, &env))
}

fn eval(global: &GlobalArena, id: GlobalId, phi: &Formula, env: &HashMap<String, usize>) -> bool {
    match phi {
        Formula::Edge(x, y) => {
            let (_, adj) = atomic_of(global, id);
            adj.get(env[x], env[y])
        }
        Formula::Eq(x, y) => {
            let (eq, _) = atomic_of(global, id);
            eq.get(env[x], env[y])
        }
        Formula::Not(f) => !eval(global, id, f, env),
        Formula::And(l, r) => eval(global, id, l, env) && eval(global, id, r, env),
        Formula::Or(l, r) => eval(global, id, l, env) || eval(global, id, r, env),
        Formula::Exists(v, body) => {
            let node = global.node(id);
            let mut inner = env.clone();
            inner.insert(v.clone(), node.arity as usize);
            node.members().iter().any(|&m| eval(global, m, body, &inner))
        }
        Formula::Forall(v, body) => {
            let node = global.node(id);
            let mut inner = env.clone();
            inner.insert(v.clone(), node.arity as usize);
            node.members().iter().all(|&m| eval(global, m, body, &inner))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::naive_eval;
    use crate::seq::tests::p4;
    use crate::seq::PartTable;
    use crate::types::reference::{ltp, tp};
    use crate::Vertex;

    #[test]
    fn final_time_local_types_translate_to_tp() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let local = TypeArena::new();
        let global = GlobalArena::new();
        let mut memo = HashMap::new();
        for k in 0..=2u32 {
            for v in 1..=4 {
                let lt = ltp(&local, &g, &table, 4, &[v], k);
                let got = to_global_type(&local, &global, &mut memo, lt).unwrap();
                assert_eq!(got, tp(&global, &g, &[v], k), "k={k} v={v}");
            }
            for a in 1..=4 {
                for b in 1..=4 {
                    let lt = ltp(&local, &g, &table, 4, &[a, b], k);
                    let got = to_global_type(&local, &global, &mut memo, lt).unwrap();
                    assert_eq!(got, tp(&global, &g, &[a, b], k), "k={k} pair=({a},{b})");
                }
            }
        }
    }

    #[test]
    fn early_time_types_are_rejected() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let local = TypeArena::new();
        let global = GlobalArena::new();
        let mut memo = HashMap::new();
        let lt = ltp(&local, &g, &table, 2, &[1, 3], 0);
        assert!(to_global_type(&local, &global, &mut memo, lt).is_err());
    }

    #[test]
    fn eval_on_type_matches_naive() {
        let (g, _) = p4();
        let global = GlobalArena::new();
        let pool = [
            "E x y",
            "x = y",
            "not E x y and not x = y",
            "exists z (E x z and E z y)",
            "forall z (not E x z or not E z y)",
        ];
        for phi in pool.map(|s| Formula::parse(s).unwrap()) {
            let k = phi.rank();
            for a in 1..=4 as Vertex {
                for b in 1..=4 as Vertex {
                    let t = tp(&global, &g, &[a, b], k);
                    let env = HashMap::from([("x".to_string(), a), ("y".to_string(), b)]);
                    assert_eq!(
                        eval_on_type(&global, t, &phi).unwrap(),
                        naive_eval(&g, &phi, &env).unwrap(),
                        "phi={phi} tuple=({a},{b})"
                    );
                }
            }
        }
    }

    #[test]
    fn eval_on_type_checks_rank_and_arity() {
        let (g, _) = p4();
        let global = GlobalArena::new();
        let t = tp(&global, &g, &[1, 2], 0);
        let deep = Formula::parse("exists z (E x z and E z y)").unwrap();
        assert!(matches!(eval_on_type(&global, t, &deep), Err(LogicError::RankTooLow { .. })));
        let wrong = Formula::parse("E x y and E y z").unwrap();
        assert!(matches!(eval_on_type(&global, t, &wrong), Err(LogicError::VariableMismatch { .. })));
    }

    #[test]
    fn sentence_types_decide_sentences() {
        let (g, cs) = p4();
        let table = PartTable::new(&cs);
        let local = TypeArena::new();
        let global = GlobalArena::new();
        for q in 1..=3u8 {
            let mut singles: Vec<TypeId> =
                (1..=4).map(|v| ltp(&local, &g, &table, 4, &[v], q as u32 - 1)).collect();
            singles.sort_unstable();
            singles.dedup();
            let sent = sentence_type(&local, &global, q, &singles).unwrap();
            assert_eq!(sent, crate::types::reference::tp_sentence(&global, &g, q as u32));
            for phi in ["exists x E x x", "exists x exists y (E x y and not x = y)", "forall x exists y E x y"]
            {
                let phi = Formula::parse(phi).unwrap();
                if phi.rank() <= q as u32 {
                    assert_eq!(
                        eval_on_type(&global, sent, &phi).unwrap(),
                        crate::logic::naive_sentence(&g, &phi).unwrap(),
                        "q={q} phi={phi}"
                    );
                }
            }
        }
    }
}
