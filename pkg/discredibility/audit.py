"""
The auditor / judge / auditee protocol as a forward-only state machine.

1. The auditor claims the top-scored candidates are members and hands the
   judge validation scores backing its claimed false positive rate.
2. The judge checks the claimed FPR against its admissibility bar.
3. The auditee, who only ever sees an :class:`AuditeeView`, builds a
   discrediting set of agreed nonmembers around the claimed members.
4. The judge scores that set with the auditor's attack and dismisses the case
   when the FPR inflates by at least the dismissal ratio.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from discredibility import AuditStateError, DiscreditError
from discredibility.config import DiscreditSettings, JudgeSettings
from discredibility.data import LabeledDataset
from discredibility.discredit.adversarial import discredit_adversarial
from discredibility.discredit.census import unfiltered_pool
from discredibility.discredit.dataset import ClaimedMemberList, DiscreditingDataset
from discredibility.discredit.generate import discredit_generate, member_noise_scale
from discredibility.discredit.search import discredit_search
from discredibility.metrics import RatioReport, fpr_at_threshold, ratio_at_min_fpr, ratio_at_threshold
from discredibility.modelzoo import GeneratorModel
from discredibility.tinynn import DenseNet

# Judge configuration is the [judge] section of the experiment config.
JudgeConfig = JudgeSettings

Scorer = Callable[[LabeledDataset], np.ndarray]


class CaseState(str, enum.Enum):
    CLAIMED = "Claimed"
    VERIFIED = "Verified"
    REJECTED = "Rejected"
    CHALLENGED = "Challenged"
    ADJUDICATED = "Adjudicated"


class Verdict(str, enum.Enum):
    UPHELD = "Upheld"
    DISMISSED = "Dismissed"


_NEXT_STATES = {
    CaseState.CLAIMED: {CaseState.VERIFIED, CaseState.REJECTED},
    CaseState.VERIFIED: {CaseState.CHALLENGED, CaseState.ADJUDICATED},
    CaseState.CHALLENGED: {CaseState.ADJUDICATED},
    CaseState.REJECTED: set(),
    CaseState.ADJUDICATED: set(),
}


@dataclass
class AuditCase:
    claimed: ClaimedMemberList
    validation_member_scores: Optional[np.ndarray]
    validation_nonmember_scores: Optional[np.ndarray]
    state: CaseState = CaseState.CLAIMED
    claim_fpr: Optional[float] = None
    rejection_reason: Optional[str] = None
    discredit_method: Optional[str] = None
    discrediting: Optional[DiscreditingDataset] = None
    discredit_scores: Optional[np.ndarray] = None
    ratio_report: Optional[RatioReport] = None
    verdict: Optional[Verdict] = None
    seeds: Dict[str, int] = field(default_factory=dict)
    history: List[str] = field(default_factory=lambda: [CaseState.CLAIMED.value])

    @property
    def attack_id(self) -> str:
        return self.claimed.attack_id

    def advance(self, state: CaseState) -> None:
        if state not in _NEXT_STATES[self.state]:
            raise AuditStateError(f"A case cannot move from {self.state.value} to {state.value}.")
        self.state = state
        self.history.append(state.value)

    def require(self, state: CaseState) -> None:
        if self.state != state:
            raise AuditStateError(f"The case is {self.state.value}, expected {state.value}.")

    def report(self) -> Dict:
        r = self.ratio_report.to_dict() if self.ratio_report else None
        return {
            "attack_id": self.attack_id,
            "n_c": len(self.claimed),
            "claim_threshold": self.claimed.threshold,
            "auditor_fpr": self.claim_fpr,
            "state": self.state.value,
            "history": list(self.history),
            "rejection_reason": self.rejection_reason,
            "discredit_method": self.discredit_method,
            "n_discredit": len(self.discrediting) if self.discrediting is not None else 0,
            "report_threshold": r["threshold"] if r else None,
            "auditor_fpr_at_report_threshold": r["auditor_min_fpr"] if r else None,
            "discredit_fpr": r["discredit_fpr"] if r else None,
            "ratio": r["ratio"] if r else None,
            "ratio_unbounded": r["ratio_unbounded"] if r else False,
            "verdict": self.verdict.value if self.verdict else None,
            "seeds": dict(sorted(self.seeds.items())),
        }


class AuditeeView:
    """
    Everything the auditee may use: the claim, its own model and training
    data, the agreed nonmember pool and an optional generator. The auditor's
    attack never appears here.
    """

    __slots__ = ("claimed", "victim", "training_samples", "nonmember_pool", "generator")

    def __init__(
        self,
        claimed: ClaimedMemberList,
        victim: DenseNet,
        training_samples: np.ndarray,
        nonmember_pool: LabeledDataset,
        generator: Optional[GeneratorModel] = None,
    ):
        self.claimed = claimed
        self.victim = victim
        self.training_samples = training_samples
        self.nonmember_pool = nonmember_pool
        self.generator = generator


def auditor_claim(
    attack_id: str,
    candidate_scores: np.ndarray,
    candidates: LabeledDataset,
    n_c: int,
    validation_member_scores: Optional[np.ndarray],
    validation_nonmember_scores: Optional[np.ndarray],
) -> AuditCase:
    """
    Open a case claiming the ``n_c`` top-scored candidates are members. The
    claim threshold is the lowest claimed score.
    """
    claimed = ClaimedMemberList.from_scores(attack_id, candidate_scores, candidates, n_c)
    return AuditCase(
        claimed=claimed,
        validation_member_scores=validation_member_scores,
        validation_nonmember_scores=validation_nonmember_scores,
    )


def judge_verify(case: AuditCase, judge: JudgeConfig) -> AuditCase:
    case.require(CaseState.CLAIMED)
    nonmembers = case.validation_nonmember_scores
    if nonmembers is None or len(nonmembers) == 0 or case.validation_member_scores is None:
        case.rejection_reason = "The auditor supplied no validation scores."
        case.advance(CaseState.REJECTED)
        return case
    case.claim_fpr = fpr_at_threshold(nonmembers, case.claimed.threshold)
    if case.claim_fpr <= judge.required_max_fpr:
        case.advance(CaseState.VERIFIED)
    else:
        case.rejection_reason = (
            f"Validation FPR {case.claim_fpr:.6g} at the claim threshold exceeds "
            f"the required {judge.required_max_fpr:.6g}."
        )
        case.advance(CaseState.REJECTED)
    return case


def build_discrediting_set(
    view: AuditeeView,
    method: str,
    params: DiscreditSettings,
    seed: int,
    epsilon: Optional[float] = None,
) -> DiscreditingDataset:
    """Dispatch to one discrediting construction using only what the auditee sees."""
    n_c = min(params.n_c, len(view.claimed))
    if method == "search":
        return discredit_search(
            view.victim, view.claimed, view.nonmember_pool, n_c, params.n_n,
            params.distance, member_samples=view.training_samples,
        )
    if method == "generate":
        if view.generator is None:
            raise DiscreditError("Generating discrediting samples needs a generator.")
        sigma = member_noise_scale(view.victim, view.training_samples, params.noise_factor)
        return discredit_generate(
            view.victim, view.generator, view.claimed, n_c, params.n_n, sigma, seed,
            params.distance, member_samples=view.training_samples,
            n_classes=view.nonmember_pool.n_classes,
        )
    if method == "adversarial":
        return discredit_adversarial(
            view.victim, view.claimed, view.nonmember_pool, n_c, params.n_n,
            params.pgd_step, params.pgd_iters,
            params.pgd_epsilon if epsilon is None else epsilon,
            params.distance, member_samples=view.training_samples,
        )
    if method == "domain_shift":
        return unfiltered_pool(view.nonmember_pool, params.shift_contrast)
    raise ValueError(f"Unknown discrediting method {method!r}")


def auditee_challenge(
    view: AuditeeView,
    method: str,
    params: DiscreditSettings,
    seed: int,
    epsilon: Optional[float] = None,
) -> DiscreditingDataset:
    """
    The auditee's side of step 3. It works from the view alone and never sees
    the case, so neither validation scores nor the attack can leak into the
    discrediting set. Raises DiscreditError when no set can be built.
    """
    dataset = build_discrediting_set(view, method, params, seed, epsilon)
    if len(dataset) == 0:
        raise DiscreditError(f"The {method} construction produced no discrediting samples.")
    return dataset


def judge_file_challenge(
    case: AuditCase,
    method: str,
    seed: int,
    outcome: Union[DiscreditingDataset, DiscreditError],
    id_allocator: Optional[Callable[[int], np.ndarray]] = None,
) -> AuditCase:
    """
    Record what the auditee handed over. A failed challenge upholds the claim.

    :param outcome: the discrediting set, or the error the auditee raised
    :param id_allocator: hands out sample ids for crafted samples
    """
    case.require(CaseState.VERIFIED)
    case.discredit_method = method
    case.seeds["discredit"] = seed
    if isinstance(outcome, DiscreditError):
        case.rejection_reason = f"Challenge failed: {outcome}"
        case.verdict = Verdict.UPHELD
        case.advance(CaseState.ADJUDICATED)
        return case
    if id_allocator is not None and method in ("generate", "adversarial"):
        outcome = outcome.with_sample_ids(id_allocator(len(outcome)))
    case.discrediting = outcome
    case.advance(CaseState.CHALLENGED)
    return case


def judge_adjudicate(case: AuditCase, judge: JudgeConfig, scorer: Scorer) -> AuditCase:
    """
    Score the discrediting set with the auditor's attack and compare FPRs.

    The comparison is made at the claim threshold when the auditor has a
    false positive there, otherwise at the auditor's lowest nonzero FPR.
    """
    case.require(CaseState.CHALLENGED)
    scores = np.asarray(scorer(case.discrediting.as_labeled()), dtype=np.float64)
    case.discredit_scores = scores
    if case.claim_fpr:
        case.ratio_report = ratio_at_threshold(case.validation_nonmember_scores, scores, case.claimed.threshold)
    else:
        case.ratio_report = ratio_at_min_fpr(
            case.validation_nonmember_scores, scores, case.validation_member_scores
        )
    case.verdict = Verdict.DISMISSED if case.ratio_report.ratio >= judge.dismissal_ratio else Verdict.UPHELD
    case.advance(CaseState.ADJUDICATED)
    return case
