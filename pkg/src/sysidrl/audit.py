"""Exact computation and verification of the performance bounds on finite MDPs.

Everything here is closed form or a linear solve (no Monte Carlo): prediction
errors under explicit distributions, mismatch coefficients, the batch bound,
the averaged bounds for iterative runs together with their modeling-error /
regret split, and the last-policy convergence proxy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mdp import ExplicitDist, FiniteMdp, exact_visitation, policy_cost, value_under_model
from .models import AliasedTabularModel, TabularModel
from .policies import TabularPolicy

GRACE = 1e-9


def scaling_factor(discount: float, cost_range: float) -> float:
    """H = gamma * C_rng / (1 - gamma)^2, converting model error to cost error."""
    return discount * cost_range / (1.0 - discount) ** 2


def _tensor(model) -> np.ndarray:
    return model.as_tensor() if hasattr(model, "as_tensor") else np.asarray(model, dtype=float)


def l1_prediction_error(truth: FiniteMdp, model, dist: ExplicitDist) -> float:
    """E_{(s,a) ~ dist} || T_sa - That_sa ||_1 (exact)."""
    that = _tensor(model)
    if that.shape != truth.transition.shape:
        raise ValueError("model tensor does not match the MDP dimensions")
    per_pair = np.abs(truth.transition - that).sum(axis=2)
    return float((dist.table * per_pair).sum())


def kl_prediction_error(truth: FiniteMdp, model, dist: ExplicitDist,
                        diagnostics: dict | None = None) -> float:
    """E_{dist} KL(T_sa || That_sa); support violations yield +inf, flagged."""
    that = _tensor(model)
    T = truth.transition
    bad = (T > 0) & (that <= 0)
    weights = dist.table
    if np.any(bad & (weights[:, :, None] > 0)):
        if diagnostics is not None:
            diagnostics["support_violations"] = int(bad.sum())
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(T > 0, np.log(np.where(T > 0, T, 1.0))
                         - np.log(np.where(that > 0, that, 1.0)), 0.0)
    per_pair = (T * ratio).sum(axis=2)
    return float((weights * per_pair).sum())


def cls_prediction_error(truth: FiniteMdp, model, dist: ExplicitDist) -> float:
    """Expected 0-1 loss of the model's most likely next state (exact)."""
    that = _tensor(model)
    pred = np.argmax(that, axis=2)
    S, A = truth.num_states, truth.num_actions
    hit = truth.transition[np.arange(S)[:, None], np.arange(A)[None, :], pred]
    return float((dist.table * (1.0 - hit)).sum())


def exact_cross_entropy(truth: FiniteMdp, model, dist: ExplicitDist) -> float:
    """L(That) = E_{dist} E_{s' ~ T_sa} [-log That_sa(s')], the exact KL-style loss."""
    that = _tensor(model)
    T = truth.transition
    bad = (T > 0) & (that <= 0) & (dist.table[:, :, None] > 0)
    if np.any(bad):
        return math.inf
    with np.errstate(divide="ignore"):
        logs = np.where(that > 0, np.log(np.where(that > 0, that, 1.0)), 0.0)
    per_pair = -(T * logs).sum(axis=2)
    return float((dist.table * per_pair).sum())


def exact_l1_loss(truth: FiniteMdp, model, dist: ExplicitDist) -> float:
    return l1_prediction_error(truth, model, dist)


@dataclass(frozen=True)
class PinskerReport:
    l1: float
    kl: float
    cls: float | None
    kl_bound_holds: bool
    cls_equality_holds: bool | None


def check_pinsker_chain(truth: FiniteMdp, model, dist: ExplicitDist) -> PinskerReport:
    """Verify eps_L1 <= sqrt(2 eps_KL) and, for deterministic models with the
    0-1 loss, eps_L1 == 2 eps_cls exactly."""
    l1 = l1_prediction_error(truth, model, dist)
    kl = kl_prediction_error(truth, model, dist)
    kl_ok = l1 <= math.sqrt(2.0 * kl) + 1e-12 if math.isfinite(kl) else True
    that = _tensor(model)
    deterministic = bool(np.all(np.isclose(that.max(axis=2), 1.0)))
    cls = eq = None
    if deterministic:
        cls = cls_prediction_error(truth, model, dist)
        eq = bool(abs(l1 - 2.0 * cls) <= 1e-12)
    return PinskerReport(l1, kl, cls, kl_ok, eq)


def mismatch_coefficient(mdp: FiniteMdp, policy, nu: ExplicitDist) -> float:
    """c^pi_nu = sup_(s,a) D(s,a) / nu(s,a); +inf where nu misses D's support."""
    d = exact_visitation(mdp, policy).table
    nu_t = nu.table
    unreachable = (nu_t <= 0) & (d > 1e-15)
    if np.any(unreachable):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(nu_t > 0, d / np.where(nu_t > 0, nu_t, 1.0), 0.0)
    return float(ratio.max())


@dataclass(frozen=True)
class BoundReport:
    """One verified inequality: lhs <= rhs with named components."""

    name: str
    lhs: float
    rhs: float
    components: dict

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def satisfied(self) -> bool:
        return bool(self.slack >= -GRACE)


def _model_value_gap(mdp: FiniteMdp, model, pi_hat, pi_prime) -> float:
    """eps_oc = E_{s ~ mu} [Vhat^pihat(s) - Vhat^pi'(s)] under the model."""
    tensor = _tensor(model)
    v_hat = value_under_model(tensor, mdp.cost, mdp.discount, pi_hat)
    v_prime = value_under_model(tensor, mdp.cost, mdp.discount, pi_prime)
    return float(mdp.initial_dist @ (v_hat - v_prime))


def audit_batch_bound(mdp: FiniteMdp, model, nu: ExplicitDist, pi_hat: TabularPolicy,
                      comparison_policies) -> list[BoundReport]:
    """The batch guarantee, one report per comparison policy:

        J(pihat) <= J(pi') + eps_oc + ((c^pihat + c^pi')/2) * H * eps_L1.
    """
    H = scaling_factor(mdp.discount, mdp.cost_range)
    eps_l1 = l1_prediction_error(mdp, model, nu)
    eps_kl = kl_prediction_error(mdp, model, nu)
    c_hat = mismatch_coefficient(mdp, pi_hat, nu)
    j_hat = policy_cost(mdp, pi_hat)
    reports = []
    for idx, pi_prime in enumerate(comparison_policies):
        c_prime = mismatch_coefficient(mdp, pi_prime, nu)
        j_prime = policy_cost(mdp, pi_prime)
        eps_oc = _model_value_gap(mdp, model, pi_hat, pi_prime)
        rhs = j_prime + eps_oc + 0.5 * (c_hat + c_prime) * H * eps_l1
        components = {
            "J(pihat)": j_hat, "J(pi')": j_prime, "eps_oc": eps_oc,
            "c_pihat": c_hat, "c_pi'": c_prime, "H": H,
            "eps_prd_l1": eps_l1, "eps_prd_kl": eps_kl,
            "eps_prd_cls": cls_prediction_error(mdp, model, nu),
        }
        reports.append(BoundReport(f"batch-bound[pi'={idx}]", j_hat, rhs, components))
    return reports


def audit_theorem1(mdp: FiniteMdp, batch_result, comparison_policies) -> list[BoundReport]:
    """Audit a one-shot batch run against the batch guarantee."""
    nu = batch_result.exploration.dist
    model = batch_result.models[-1]
    pi_hat = batch_result.policies[-1]
    return audit_batch_bound(mdp, model, nu, pi_hat, comparison_policies)


def _mixture_coefficient(beta: float, c_prime: float) -> float:
    """Transfer coefficient for rho = beta nu + (1-beta) D(pi_i).

    Exactly c' at the even-balance default beta = 1/2; derived from
    E_D = (E_rho - beta E_nu)/(1-beta) and E_nu <= E_rho / beta.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("averaged bound needs a mixing weight strictly inside (0, 1)")
    return 0.5 * (1.0 / (1.0 - beta) + max(0.0, c_prime - beta / (1.0 - beta)) / beta)


@dataclass(frozen=True)
class IterativeRounds:
    """Aligned per-round objects of an iterative run.

    Round i holds the model chosen before slice i was drawn, the policy
    solved from it (whose visitation generated the on-policy half of slice
    i), and the exact mixed distribution rho_i.
    """

    mdp: FiniteMdp
    nu: ExplicitDist
    beta: float
    models: list
    policies: list
    visitations: list
    rhos: list

    @staticmethod
    def from_result(mdp: FiniteMdp, result) -> "IterativeRounds":
        nu = result.exploration.dist
        models = result.models_before_slices()
        policies = result.policies_before_slices()
        beta = result.beta
        if not 0.0 < beta < 1.0:
            raise ValueError("averaged-bound audits need a run with constant mixing "
                             "weight in (0, 1); audit pure-exploration runs with "
                             "audit_theorem1 instead")
        visitations = [exact_visitation(mdp, p) for p in policies]
        rhos = [ExplicitDist(beta * nu.table + (1.0 - beta) * d.table) for d in visitations]
        return IterativeRounds(mdp, nu, beta, models, policies, visitations, rhos)

    def __len__(self) -> int:
        return len(self.models)


def averaged_prediction_errors(rounds: IterativeRounds) -> dict:
    mdp = rounds.mdp
    l1 = np.mean([l1_prediction_error(mdp, m, rho)
                  for m, rho in zip(rounds.models, rounds.rhos)])
    kl = np.mean([kl_prediction_error(mdp, m, rho)
                  for m, rho in zip(rounds.models, rounds.rhos)])
    cls = np.mean([cls_prediction_error(mdp, m, rho)
                   for m, rho in zip(rounds.models, rounds.rhos)])
    return {"l1": float(l1), "kl": float(kl), "cls": float(cls)}


def average_distribution(rounds: IterativeRounds) -> ExplicitDist:
    return ExplicitDist(np.mean([rho.table for rho in rounds.rhos], axis=0))


def hindsight_best_model(rounds: IterativeRounds, model_kind) -> object:
    """Exact minimizer of the average KL-style loss over the round sequence.

    For the tabular class this is the true transition tensor; for the
    aliased class it is the rho-bar weighted pooling of true rows per
    (block, action).  Both come from weighting true rows exactly rather than
    resampling.
    """
    mdp = rounds.mdp
    rho_bar = average_distribution(rounds).table
    if model_kind is TabularModel or isinstance(model_kind, TabularModel):
        return TabularModel(mdp.transition.copy())
    if isinstance(model_kind, AliasedTabularModel):
        partition = model_kind.partition
        blocks = int(partition.max()) + 1
        S, A = mdp.num_states, mdp.num_actions
        pooled = np.full((blocks, A, S), 1.0 / S)
        for b in range(blocks):
            members = np.flatnonzero(partition == b)
            w = rho_bar[members]                      # (|members|, A)
            num = np.einsum("ma,mas->as", w, mdp.transition[members])
            den = w.sum(axis=0)[:, None]
            uniform = np.full((A, S), 1.0 / S)
            pooled[b] = np.where(den > 0, num / np.where(den > 0, den, 1.0), uniform)
        return AliasedTabularModel(partition, pooled)
    raise TypeError("hindsight minimizer known only for tabular / aliased classes")


@dataclass(frozen=True)
class RegretSplit:
    """Exact-loss decomposition: avg loss, hindsight best, modeling error, regret."""

    kind: str
    per_round_losses: np.ndarray
    hindsight_loss: float
    truth_loss: float
    avg_regret: float
    modeling_error: float
    prediction_error: float


def exact_regret_split(rounds: IterativeRounds, kind: str = "kl") -> RegretSplit:
    """Split the averaged prediction error into modeling error + regret.

    Uses exact per-round losses L_i(.) under rho_i.  The L1 variant is
    supported for the tabular class only, where the hindsight minimizer is
    the truth itself.
    """
    mdp = rounds.mdp
    if kind == "kl":
        loss = lambda model, rho: exact_cross_entropy(mdp, model, rho)
    elif kind == "l1":
        if not isinstance(rounds.models[0], TabularModel):
            raise ValueError("exact L1 regret is audited for the tabular class only")
        loss = lambda model, rho: exact_l1_loss(mdp, model, rho)
    else:
        raise ValueError(f"unsupported exact regret kind: {kind!r}")
    losses = np.array([loss(m, rho) for m, rho in zip(rounds.models, rounds.rhos)])
    best = hindsight_best_model(rounds, rounds.models[0])
    hindsight = float(np.mean([loss(best, rho) for rho in rounds.rhos]))
    truth_model = TabularModel(mdp.transition.copy())
    truth = float(np.mean([loss(truth_model, rho) for rho in rounds.rhos]))
    avg = float(losses.mean())
    return RegretSplit(kind, losses, hindsight, truth,
                       avg_regret=avg - hindsight,
                       modeling_error=hindsight - truth,
                       prediction_error=avg - truth)


def audit_dagger_bounds(mdp: FiniteMdp, result, comparison_policies,
                        rounds: IterativeRounds | None = None) -> dict:
    """Verify the averaged guarantees of an iterative run.

    Checks, with every quantity exact:
      * J(pihat) <= J(pibar)  (best of the round policies vs their mixture);
      * J(pibar) <= J(pi') + eps_oc_bar + coef(beta, c^pi') * H * eps_prd_bar
        for each comparison policy (coef = c^pi' at beta = 1/2);
      * the split eps_prd <= eps_mdl + eps_rgt for the KL losses (and L1 for
        the tabular class).
    Returns {"reports": [BoundReport...], "splits": {...}, "rounds": rounds}.
    """
    if rounds is None:
        rounds = IterativeRounds.from_result(mdp, result)
    n_rounds = len(rounds)
    H = scaling_factor(mdp.discount, mdp.cost_range)
    costs = np.array([policy_cost(mdp, p) for p in rounds.policies])
    j_hat = float(costs.min())
    j_bar = float(costs.mean())
    errs = averaged_prediction_errors(rounds)
    reports = [BoundReport("best-vs-mixture", j_hat, j_bar,
                           {"J(pihat)": j_hat, "J(pibar)": j_bar})]
    for idx, pi_prime in enumerate(comparison_policies):
        j_prime = policy_cost(mdp, pi_prime)
        c_prime = mismatch_coefficient(mdp, pi_prime, rounds.nu)
        eps_oc = float(np.mean([_model_value_gap(mdp, m, p, pi_prime)
                                for m, p in zip(rounds.models, rounds.policies)]))
        coef = _mixture_coefficient(rounds.beta, c_prime)
        rhs = j_prime + eps_oc + coef * H * errs["l1"]
        components = {"J(pibar)": j_bar, "J(pi')": j_prime, "eps_oc_bar": eps_oc,
                      "c_pi'": c_prime, "coef": coef, "H": H,
                      "eps_prd_l1_bar": errs["l1"], "eps_prd_kl_bar": errs["kl"],
                      "eps_prd_cls_bar": errs["cls"], "rounds": n_rounds}
        reports.append(BoundReport(f"averaged-bound[pi'={idx}]", j_bar, rhs, components))
    splits = {"kl": exact_regret_split(rounds, "kl")}
    if isinstance(rounds.models[0], TabularModel):
        splits["l1"] = exact_regret_split(rounds, "l1")
    for kind, split in splits.items():
        reports.append(BoundReport(
            f"prediction-split[{kind}]", split.prediction_error,
            split.modeling_error + split.avg_regret,
            {"eps_prd": split.prediction_error, "eps_mdl": split.modeling_error,
             "eps_rgt": split.avg_regret}))
    return {"reports": reports, "splits": splits, "rounds": rounds}


@dataclass(frozen=True)
class LastPolicyReport:
    """Convergence proxy for the last policy of an iterative run.

    The inequality J(pi_N) <= J(pibar) + (C_rng / (2(1-gamma))) * mean_i
    ||D_N - D_i||_1 is an identity-level consequence of exact evaluation and
    is checked whenever the proxy says the visitations converged; on a
    non-converged run it is reported but not asserted.
    """

    distances: np.ndarray
    last_quartile_max: float
    converged: bool
    lhs: float
    rhs: float
    satisfied: bool | None


def audit_last_policy(mdp: FiniteMdp, result, rounds: IterativeRounds | None = None,
                      convergence_threshold: float = 0.1) -> LastPolicyReport:
    if rounds is None:
        rounds = IterativeRounds.from_result(mdp, result)
    tables = [d.table for d in rounds.visitations]
    d_last = tables[-1]
    distances = np.array([np.abs(t - d_last).sum() for t in tables])
    n = len(tables)
    quart = distances[max(0, n - max(1, n // 4)):]
    last_quartile_max = float(quart.max())
    converged = last_quartile_max < convergence_threshold
    costs = np.array([policy_cost(mdp, p) for p in rounds.policies])
    lhs = float(costs[-1])
    rhs = float(costs.mean()
                + mdp.cost_range / (2.0 * (1.0 - mdp.discount)) * distances.mean())
    satisfied = bool(lhs <= rhs + GRACE) if converged else None
    return LastPolicyReport(distances, last_quartile_max, converged, lhs, rhs, satisfied)


# ---------------------------------------------------------------------------
# report rendering
# ---------------------------------------------------------------------------

def reports_to_csv(reports: list[BoundReport]) -> str:
    lines = ["# sysidrl bound-report csv v1",
             "name,lhs,rhs,slack,satisfied,components"]
    for r in reports:
        comp = ";".join(f"{k}={v:.17g}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in r.components.items())
        lines.append(f"{r.name},{r.lhs:.17g},{r.rhs:.17g},{r.slack:.17g},"
                     f"{int(r.satisfied)},{comp}")
    return "\n".join(lines) + "\n"


def format_report_table(reports: list[BoundReport]) -> str:
    width = max(len(r.name) for r in reports) if reports else 4
    lines = [f"{'bound':<{width}}  {'lhs':>14}  {'rhs':>14}  {'slack':>12}  ok"]
    for r in reports:
        lines.append(f"{r.name:<{width}}  {r.lhs:>14.6g}  {r.rhs:>14.6g}  "
                     f"{r.slack:>12.4g}  {'yes' if r.satisfied else 'NO'}")
    return "\n".join(lines)
