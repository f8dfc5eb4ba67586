//! Identifiers for the projection rules, and a trace that records which
//! rules fired during a projection. Tests use the trace to prove that a
//! corpus exercises every rule.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// One projection rule. `Cp*` rules belong to choreographic projection
/// (choreography → sequential verification program); `Ep*` rules belong to
/// endpoint projection (choreography → one program per sort).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    // --- choreographic projection -------------------------------------
    /// Condition conjunct whose target is a singular endpoint or an indexed
    /// family member that the context instance matches.
    CpExpr,
    /// Condition conjunct whose target cannot match the context instance:
    /// contributes `true`.
    CpExprSkip,
    /// Conjunct over a family range, evaluated at one member: guarded by a
    /// range-membership test.
    CpExprIndex,
    /// Conjunct over a family range, evaluated for the whole range:
    /// quantified over the range.
    CpExprRange,
    /// `endpoint α: loc := e;` becomes a confined assignment.
    CpAssign,
    /// `if` with the unanimity check on its condition.
    CpIf,
    /// `while` with the unanimity check before entry and at the end of each
    /// iteration.
    CpWhile,
    /// `endpoint e: r.m(args);` becomes a confined dynamically-bound call.
    CpMethodCall,
    /// `endpoint F[v := lo .. hi]: ...m(...);` becomes a `par` block whose
    /// contract is the method contract instantiated per member.
    CpMethodCallRange,
    /// Point-to-point `communicate` becomes exhale-at-sender /
    /// inhale-at-receiver over the channel invariant.
    CpComm,
    /// Ranged `communicate` additionally asserts receiver-index injectivity
    /// and wraps the transfer in a `par` block.
    CpCommRange,

    // --- endpoint projection -------------------------------------------
    /// Assignment at this sort.
    EpAssign,
    /// Assignment at a different sort: contributes nothing.
    EpAssignSkip,
    /// Method call at this sort.
    EpCall,
    /// Method call at a different sort: contributes nothing.
    EpCallSkip,
    /// Send half of a singular-to-singular communication.
    EpSend,
    /// Receive half of a singular-to-singular communication.
    EpReceive,
    /// Sender and receiver are the same instance: degenerates to a local
    /// assignment.
    EpComm,
    /// Communication not involving this sort: contributes nothing.
    EpCommSkip,
    /// Condition conjunct at this singular endpoint.
    EpExpr,
    /// Condition conjunct at a different sort: contributes `true`.
    EpExprSkip,
    /// Condition conjunct at one family member: guarded by an index test.
    EpExprIndex,
    /// Condition conjunct over a family range: guarded by range membership.
    EpRange,
    /// Conjunction of condition conjuncts.
    EpAnd,
    /// Global (`\chor`) fact: contributes `true` to local conditions.
    EpChor,
    /// `if` statement.
    EpIf,
    /// `while` statement.
    EpWhile,
    /// Send half when the sender is one indexed family member.
    EpIndexSend,
    /// Receive half when the receiver is one indexed family member.
    EpIndexReceive,
    /// Send half when the sender ranges over a family.
    EpRangeSend,
    /// Receive half when the receiver ranges over a family; uses the
    /// inverted index map.
    EpRangeReceive,
}

impl Rule {
    /// Every rule, in a stable order.
    pub const ALL: [Rule; 31] = [
        Rule::CpExpr,
        Rule::CpExprSkip,
        Rule::CpExprIndex,
        Rule::CpExprRange,
        Rule::CpAssign,
        Rule::CpIf,
        Rule::CpWhile,
        Rule::CpMethodCall,
        Rule::CpMethodCallRange,
        Rule::CpComm,
        Rule::CpCommRange,
        Rule::EpAssign,
        Rule::EpAssignSkip,
        Rule::EpCall,
        Rule::EpCallSkip,
        Rule::EpSend,
        Rule::EpReceive,
        Rule::EpComm,
        Rule::EpCommSkip,
        Rule::EpExpr,
        Rule::EpExprSkip,
        Rule::EpExprIndex,
        Rule::EpRange,
        Rule::EpAnd,
        Rule::EpChor,
        Rule::EpIf,
        Rule::EpWhile,
        Rule::EpIndexSend,
        Rule::EpIndexReceive,
        Rule::EpRangeSend,
        Rule::EpRangeReceive,
    ];

    /// The eleven rules of choreographic projection.
    pub fn chor_rules() -> impl Iterator<Item = Rule> {
        Rule::ALL.into_iter().filter(|r| r.is_chor_rule())
    }

    /// The rules of endpoint projection (including the method-call pair).
    pub fn ep_rules() -> impl Iterator<Item = Rule> {
        Rule::ALL.into_iter().filter(|r| !r.is_chor_rule())
    }

    pub fn is_chor_rule(self) -> bool {
        matches!(
            self,
            Rule::CpExpr
                | Rule::CpExprSkip
                | Rule::CpExprIndex
                | Rule::CpExprRange
                | Rule::CpAssign
                | Rule::CpIf
                | Rule::CpWhile
                | Rule::CpMethodCall
                | Rule::CpMethodCallRange
                | Rule::CpComm
                | Rule::CpCommRange
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::CpExpr => "CpExpr",
            Rule::CpExprSkip => "CpExprSkip",
            Rule::CpExprIndex => "CpExprIndex",
            Rule::CpExprRange => "CpExprRange",
            Rule::CpAssign => "CpAssign",
            Rule::CpIf => "CpIf",
            Rule::CpWhile => "CpWhile",
            Rule::CpMethodCall => "CpMethodCall",
            Rule::CpMethodCallRange => "CpMethodCallRange",
            Rule::CpComm => "CpComm",
            Rule::CpCommRange => "CpCommRange",
            Rule::EpAssign => "EpAssign",
            Rule::EpAssignSkip => "EpAssignSkip",
            Rule::EpCall => "EpCall",
            Rule::EpCallSkip => "EpCallSkip",
            Rule::EpSend => "EpSend",
            Rule::EpReceive => "EpReceive",
            Rule::EpComm => "EpComm",
            Rule::EpCommSkip => "EpCommSkip",
            Rule::EpExpr => "EpExpr",
            Rule::EpExprSkip => "EpExprSkip",
            Rule::EpExprIndex => "EpExprIndex",
            Rule::EpRange => "EpRange",
            Rule::EpAnd => "EpAnd",
            Rule::EpChor => "EpChor",
            Rule::EpIf => "EpIf",
            Rule::EpWhile => "EpWhile",
            Rule::EpIndexSend => "EpIndexSend",
            Rule::EpIndexReceive => "EpIndexReceive",
            Rule::EpRangeSend => "EpRangeSend",
            Rule::EpRangeReceive => "EpRangeReceive",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Append-only record of rule applications during one projection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTrace {
    pub fired: Vec<Rule>,
}

impl RuleTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, rule: Rule) {
        self.fired.push(rule);
    }

    /// How many times each rule fired.
    pub fn counts(&self) -> BTreeMap<Rule, usize> {
        let mut out = BTreeMap::new();
        for r in &self.fired {
            *out.entry(*r).or_insert(0) += 1;
        }
        out
    }

    pub fn contains(&self, rule: Rule) -> bool {
        self.fired.contains(&rule)
    }

    /// Merge another trace into this one (e.g. projections of several sorts).
    pub fn absorb(&mut self, other: &RuleTrace) {
        self.fired.extend_from_slice(&other.fired);
    }

    /// Rules from `universe` that never fired.
    pub fn missing<I: IntoIterator<Item = Rule>>(&self, universe: I) -> Vec<Rule> {
        let counts = self.counts();
        universe.into_iter().filter(|r| !counts.contains_key(r)).collect()
    }
}
