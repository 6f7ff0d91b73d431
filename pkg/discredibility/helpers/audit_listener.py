from __future__ import annotations

import json
from typing import Dict, List, Optional, Union

import pandas as pd
import toml

from discredibility import DiscreditError
from discredibility.audit import (
    AuditCase,
    AuditeeView,
    CaseState,
    Verdict,
    auditee_challenge,
    auditor_claim,
    judge_adjudicate,
    judge_file_challenge,
    judge_verify,
)
from discredibility.data import load_mids
from discredibility.discredit.dataset import DiscreditingDataset, ProvenanceRecord
from discredibility.metrics import RatioReport
from discredibility.project import Project


class AuditListener(object):
    """
    Class that can drive an audit case from claim to verdict.

    The case state is written to a toml file after every step. When the file
    exists, the case resumes after its last completed step.
    """

    def __init__(
        self,
        project: Project,
        attack_id: str,
        method: str,
        epsilon: Optional[float] = None,
        case_name: Optional[str] = None,
    ):
        self.project = project
        self.attack_id = attack_id
        self.method = method
        self.epsilon = epsilon
        tag = f"_eps{epsilon:g}" if epsilon is not None else ""
        self.case_name = case_name or f"{attack_id}_{method}{tag}"
        self.case_toml = self.project.paths.case_toml(self.case_name)
        self.dd_mids = self.project.paths.discredit_mids(f"case_{self.case_name}")
        self.dd_provenance = self.project.paths.provenance_csv(f"case_{self.case_name}")

    def print(
        self,
        message: str,
        color: str = "magenta",
        line_above: bool = False,
        line_below: bool = False,
        emoji_alias: Optional[Union[str, List[str]]] = "scales",
    ) -> None:
        self.project.storyteller.printer.print(
            message=message,
            color=color,
            line_above=line_above,
            line_below=line_below,
            emoji_alias=emoji_alias,
        )

    def _open_case(self) -> AuditCase:
        bench = self.project.attack_bench
        sample_db = self.project.sample_db
        sv = bench.evaluation_scores(self.attack_id)
        member_scores, nonmember_scores = bench.split_scores(sv)
        candidates = sample_db.dataset.subset(sv.sample_ids)
        n_c = max(self.project.config.discredit.n_c, 1)
        case = auditor_claim(
            self.attack_id, sv.scores, candidates, n_c, member_scores, nonmember_scores
        )
        case.seeds["run"] = self.project.config.run.seed
        return case

    def _write_state(self, case: AuditCase) -> None:
        state: Dict = {
            "case_name": self.case_name,
            "attack_id": self.attack_id,
            "state": case.state.value,
            "history": case.history,
            "seeds": case.seeds,
        }
        if case.claim_fpr is not None:
            state["claim_fpr"] = case.claim_fpr
        if case.rejection_reason:
            state["rejection_reason"] = case.rejection_reason
        if case.discredit_method:
            state["discredit_method"] = case.discredit_method
        if case.discrediting is not None:
            state["discrediting"] = {
                "mids": self.dd_mids.name,
                "provenance": self.dd_provenance.name,
            }
        if case.ratio_report is not None:
            state["ratio_report"] = case.ratio_report.to_dict()
        if case.verdict is not None:
            state["verdict"] = case.verdict.value
        with open(self.case_toml, "w") as fh:
            toml.dump(state, fh)

    def _restore(self) -> AuditCase:
        """Reopen the claim deterministically and reapply the stored progress."""
        state = toml.load(self.case_toml)
        case = self._open_case()
        case.state = CaseState(state["state"])
        case.history = list(state["history"])
        case.seeds.update(state.get("seeds", {}))
        case.claim_fpr = state.get("claim_fpr")
        case.rejection_reason = state.get("rejection_reason")
        case.discredit_method = state.get("discredit_method")
        if "discrediting" in state:
            data = load_mids(self.dd_mids)
            frame = pd.read_csv(self.dd_provenance)
            records = [
                ProvenanceRecord(
                    sample_id=int(row.sample_id),
                    method=str(row.method),
                    source_member_id=int(row.source_member_id),
                    latent_distance=float(row.latent_distance),
                    initial_mse=float(row.initial_mse),
                    final_mse=float(row.final_mse),
                    seed=int(row.seed),
                )
                for row in frame.itertuples(index=False)
            ]
            case.discrediting = DiscreditingDataset(data.samples, data.labels, records, data.n_classes)
        if "ratio_report" in state:
            case.ratio_report = RatioReport.from_dict(state["ratio_report"])
        if "verdict" in state:
            case.verdict = Verdict(state["verdict"])
        return case

    def _auditee_view(self, case: AuditCase) -> AuditeeView:
        sample_db = self.project.sample_db
        zoo = self.project.model_zoo
        data = sample_db.dataset
        return AuditeeView(
            claimed=case.claimed,
            victim=zoo.victim,
            training_samples=data.subset(sample_db.split.member_ids).samples,
            nonmember_pool=data.subset(sample_db.split.public_pool_ids),
            generator=zoo.generator if self.method == "generate" else None,
        )

    def listen(self) -> AuditCase:
        """
        Run every remaining step of the case and write the case report.
        """
        cfg = self.project.config
        if self.case_toml.exists():
            case = self._restore()
            self.print(f"Resuming case {self.case_name} in state {case.state.value}")
        else:
            self.print(f"Opening case {self.case_name}", line_above=True)
            case = self._open_case()
            self._write_state(case)

        if case.state == CaseState.CLAIMED:
            judge_verify(case, cfg.judge)
            self._write_state(case)
            self.print(f"Judge: claim {case.state.value} (validation FPR {case.claim_fpr})")

        if case.state == CaseState.VERIFIED:
            seed = cfg.seed_for("discredit")
            try:
                outcome = auditee_challenge(
                    self._auditee_view(case), self.method, cfg.discredit, seed=seed, epsilon=self.epsilon
                )
            except DiscreditError as e:
                outcome = e
            judge_file_challenge(
                case,
                self.method,
                seed,
                outcome,
                id_allocator=lambda n: self.project.sample_db.reserve_ids(n, f"case_{self.case_name}"),
            )
            if case.discrediting is not None:
                case.discrediting.save(self.dd_mids, self.dd_provenance)
                self.project.storyteller.record_artifact(self.dd_mids, "audit", "table4")
                self.project.storyteller.record_artifact(self.dd_provenance, "audit", "table4")
                self.print(f"Auditee: {len(case.discrediting)} discrediting samples by {self.method}")
            self._write_state(case)

        if case.state == CaseState.CHALLENGED:
            bench = self.project.attack_bench
            judge_adjudicate(case, cfg.judge, lambda d: bench.score(self.attack_id, d).scores)
            self._write_state(case)

        report = case.report()
        report["artifacts"] = {
            "case_state": self.case_toml.name,
            "discrediting": self.dd_mids.name if case.discrediting is not None else None,
            "provenance": self.dd_provenance.name if case.discrediting is not None else None,
        }
        report_file = self.project.paths.case_report(self.case_name)
        with open(report_file, "w") as fh:
            json.dump(report, fh, indent=1, sort_keys=True, allow_nan=False)
        self.project.storyteller.record_artifact(report_file, "audit", "section3")
        verdict = case.verdict.value if case.verdict else case.state.value
        self.print(f"Case {self.case_name}: {verdict}", line_below=True)
        return case

