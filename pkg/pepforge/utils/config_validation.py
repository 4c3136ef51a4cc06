# pepforge validators: run configuration and example documents
#
# Contract highlights:
# - Path-scoped, actionable issues ($.model.heads, $.pocket.angles[3], ...)
# - Validators never raise on malformed input; they collect issues
# - assert_* variants raise ConfigValidationError (run configs) or InvariantError (documents)
#
# Public API:
# - validate_run_config(cfg: dict) -> tuple[bool, list[ValidationIssue]]
# - assert_valid_run_config(cfg: dict) -> None
# - validate_example_doc(doc: dict) -> tuple[bool, list[ValidationIssue]]
# - assert_valid_example_doc(doc: dict) -> None

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

from ..core.errors import ConfigValidationError, InvariantError
from .residues import AA_ORDER

SCHEDULE_KINDS = {"cosine"}
ANGLE_FEATURES = {"sincos", "raw"}
PRESETS = {"miniature", "full"}
MAX_EXT_K = 4
MAX_SEED = 2**64 - 1


@dataclass
class ValidationIssue:
    path: str
    message: str
    code: str = "invalid"

    def __str__(self) -> str:
        return f"{self.path}: {self.message} ({self.code})"


def _require(cond: bool, issues: list[ValidationIssue], path: str, msg: str, code: str = "invalid") -> None:
    if not cond:
        issues.append(ValidationIssue(path=path, message=msg, code=code))


def _type_of(value: Any) -> str:
    return type(value).__name__


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_num(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


class RunConfigValidator:
    """Validator for the dict form of RunConfig."""

    def validate(self, cfg: dict[str, Any]) -> list[ValidationIssue]:
        issues: list[ValidationIssue] = []
        _require(isinstance(cfg, dict), issues, "$", f"config must be object, got: {_type_of(cfg)}", "type")
        if not isinstance(cfg, dict):
            return issues

        _require(cfg.get("preset") in PRESETS, issues, "$.preset", f"preset must be one of {sorted(PRESETS)}", "enum")

        seed = cfg.get("seed")
        _require(_is_int(seed), issues, "$.seed", f"seed must be integer, got: {_type_of(seed)}", "type")
        if _is_int(seed):
            _require(0 <= seed <= MAX_SEED, issues, "$.seed", "seed must be an unsigned 64-bit integer", "range")

        ext_k = cfg.get("ext_k")
        _require(_is_int(ext_k), issues, "$.ext_k", f"ext_k must be integer, got: {_type_of(ext_k)}", "type")
        if _is_int(ext_k):
            _require(0 <= ext_k <= MAX_EXT_K, issues, "$.ext_k", f"ext_k must be in [0, {MAX_EXT_K}]", "range")

        cutoff = cfg.get("pocket_cutoff")
        _require(_is_num(cutoff) and cutoff > 0, issues, "$.pocket_cutoff", "pocket_cutoff must be > 0", "range")

        ratios = cfg.get("split_ratios")
        ok = isinstance(ratios, list) and len(ratios) == 3 and all(_is_num(r) and r >= 0 for r in ratios)
        _require(ok, issues, "$.split_ratios", "split_ratios must be three nonnegative numbers", "type")
        if ok:
            _require(abs(sum(ratios) - 1.0) < 1e-9, issues, "$.split_ratios", "split_ratios must sum to 1", "range")

        self._validate_paths(cfg.get("paths"), issues)
        self._validate_schedule(cfg.get("schedule"), issues)
        self._validate_model(cfg.get("model"), issues)
        self._validate_optimizer(cfg.get("optimizer"), issues)
        self._validate_sequence(cfg.get("sequence"), issues)
        return issues

    # -----------------
    # Section validators
    # -----------------
    def _section(self, value: Any, name: str, issues: list[ValidationIssue]) -> dict[str, Any] | None:
        _require(isinstance(value, dict), issues, f"$.{name}", f"{name} must be object, got: {_type_of(value)}", "type")
        return value if isinstance(value, dict) else None

    def _validate_paths(self, paths: Any, issues: list[ValidationIssue]) -> None:
        p = self._section(paths, "paths", issues)
        if p is None:
            return
        for key in ("data_dir", "checkpoint_dir", "output_dir"):
            v = p.get(key)
            _require(isinstance(v, str) and bool(v.strip()), issues, f"$.paths.{key}", f"{key} must be a non-empty path", "required")

    def _validate_schedule(self, sched: Any, issues: list[ValidationIssue]) -> None:
        s = self._section(sched, "schedule", issues)
        if s is None:
            return
        T = s.get("T")
        _require(_is_int(T) and T >= 2, issues, "$.schedule.T", "T must be an integer >= 2", "range")
        _require(s.get("kind") in SCHEDULE_KINDS, issues, "$.schedule.kind", f"kind must be one of {sorted(SCHEDULE_KINDS)}", "enum")
        ns = s.get("noise_scale")
        _require(_is_num(ns) and ns > 0, issues, "$.schedule.noise_scale", "noise_scale must be > 0", "range")

    def _validate_model(self, model: Any, issues: list[ValidationIssue]) -> None:
        m = self._section(model, "model", issues)
        if m is None:
            return
        for key in ("blocks", "ff"):
            v = m.get(key)
            _require(_is_int(v) and v >= 1, issues, f"$.model.{key}", f"{key} must be an integer >= 1", "range")
        hidden = m.get("hidden")
        heads = m.get("heads")
        _require(_is_int(hidden) and hidden >= 2 and hidden % 2 == 0, issues, "$.model.hidden", "hidden must be an even integer >= 2", "range")
        _require(_is_int(heads) and heads >= 1, issues, "$.model.heads", "heads must be an integer >= 1", "range")
        if _is_int(hidden) and _is_int(heads) and heads >= 1:
            _require(hidden % heads == 0, issues, "$.model.heads", "heads must divide hidden", "cross_constraint")
        _require(m.get("angle_features") in ANGLE_FEATURES, issues, "$.model.angle_features", f"angle_features must be one of {sorted(ANGLE_FEATURES)}", "enum")
        _require(isinstance(m.get("residual"), bool), issues, "$.model.residual", "residual must be boolean", "type")
        _require(isinstance(m.get("zero_init_output"), bool), issues, "$.model.zero_init_output", "zero_init_output must be boolean", "type")
        d = m.get("dropout")
        _require(_is_num(d) and 0.0 <= d < 1.0, issues, "$.model.dropout", "dropout must be in [0, 1)", "range")

    def _validate_optimizer(self, opt: Any, issues: list[ValidationIssue]) -> None:
        o = self._section(opt, "optimizer", issues)
        if o is None:
            return
        for key in ("lr", "eps", "loss_beta"):
            v = o.get(key)
            _require(_is_num(v) and v > 0, issues, f"$.optimizer.{key}", f"{key} must be > 0", "range")
        betas = o.get("betas")
        ok = isinstance(betas, list) and len(betas) == 2 and all(_is_num(b) and 0.0 <= b < 1.0 for b in betas)
        _require(ok, issues, "$.optimizer.betas", "betas must be two numbers in [0, 1)", "range")
        for key, low in (("batch_size", 1), ("epochs", 1), ("max_steps", 0), ("patience", 0)):
            v = o.get(key)
            _require(_is_int(v) and v >= low, issues, f"$.optimizer.{key}", f"{key} must be an integer >= {low}", "range")

    def _validate_sequence(self, seq: Any, issues: list[ValidationIssue]) -> None:
        s = self._section(seq, "sequence", issues)
        if s is None:
            return
        tau = s.get("blosum_temperature")
        _require(_is_num(tau) and tau > 0, issues, "$.sequence.blosum_temperature", "blosum_temperature must be > 0", "range")
        lam = s.get("uniform_mix")
        _require(_is_num(lam) and 0.0 <= lam <= 1.0, issues, "$.sequence.uniform_mix", "uniform_mix must lie in [0, 1]", "range")


class ExampleDocValidator:
    """Validator for <pdbid>.example.json documents."""

    def validate(self, doc: dict[str, Any]) -> list[ValidationIssue]:
        issues: list[ValidationIssue] = []
        _require(isinstance(doc, dict), issues, "$", f"example must be object, got: {_type_of(doc)}", "type")
        if not isinstance(doc, dict):
            return issues
        for k in ("meta", "peptide", "pocket"):
            _require(isinstance(doc.get(k), dict), issues, "$", f"Missing required object: {k}", "required")
        if issues:
            return issues

        meta = doc["meta"]
        _require(isinstance(meta.get("pdb_id"), str) and bool(meta.get("pdb_id")), issues, "$.meta.pdb_id", "pdb_id must be a non-empty string", "required")
        _require(meta.get("aa_order") == AA_ORDER, issues, "$.meta.aa_order", f"aa_order must be {AA_ORDER}", "mismatch")
        ek = meta.get("ext_k")
        _require(_is_int(ek) and 0 <= ek <= MAX_EXT_K, issues, "$.meta.ext_k", f"ext_k must be in [0, {MAX_EXT_K}]", "range")

        pep = doc["peptide"]
        seq = pep.get("seq")
        _require(isinstance(seq, str) and all(c in AA_ORDER for c in seq), issues, "$.peptide.seq", "seq must use the 20 canonical letters", "alphabet")
        if isinstance(seq, str):
            _require(5 <= len(seq) <= 30, issues, "$.peptide.seq", "peptide length must be in [5, 30]", "range")
            self._angles(pep.get("angles"), len(seq) - 2, "$.peptide.angles", issues)
            self._coords(pep.get("backbone"), len(seq), "$.peptide.backbone", issues)

        poc = doc["pocket"]
        aa = poc.get("aa")
        _require(isinstance(aa, str) and len(aa) > 0 and all(c in AA_ORDER for c in aa), issues, "$.pocket.aa", "pocket aa must be a non-empty canonical sequence", "alphabet")
        if isinstance(aa, str):
            self._angles(poc.get("angles"), len(aa), "$.pocket.angles", issues)
            self._ids(poc.get("ids"), len(aa), "$.pocket.ids", issues)
        contact = poc.get("contact")
        _require(isinstance(contact, dict), issues, "$.pocket.contact", "contact must be object", "type")
        if isinstance(contact, dict):
            ids = contact.get("ids")
            n = len(ids) if isinstance(ids, list) else 0
            self._ids(ids, n, "$.pocket.contact.ids", issues)
            self._coords(contact.get("backbone"), n, "$.pocket.contact.backbone", issues)
        return issues

    def _angles(self, rows: Any, n: int, path: str, issues: list[ValidationIssue]) -> None:
        _require(isinstance(rows, list) and len(rows) == n, issues, path, f"expected {n} angle rows", "shape")
        if not isinstance(rows, list):
            return
        for i, r in enumerate(rows):
            ok = isinstance(r, list) and len(r) == 8 and all(_is_num(x) for x in r)
            _require(ok, issues, f"{path}[{i}]", "angle row must be 8 finite numbers", "type")
            if ok:
                _require(all(-math.pi <= x < math.pi for x in r[:4]), issues, f"{path}[{i}]", "dihedrals must lie in [-pi, pi)", "range")
                _require(all(0.0 < x <= math.pi for x in r[4:]), issues, f"{path}[{i}]", "bond angles must lie in (0, pi]", "range")

    def _coords(self, rows: Any, n: int, path: str, issues: list[ValidationIssue]) -> None:
        _require(isinstance(rows, list) and len(rows) == n, issues, path, f"expected {n} residues", "shape")
        if not isinstance(rows, list):
            return
        for i, r in enumerate(rows):
            ok = (
                isinstance(r, list)
                and len(r) == 4
                and all(isinstance(a, list) and len(a) == 3 and all(_is_num(x) for x in a) for a in r)
            )
            _require(ok, issues, f"{path}[{i}]", "residue must be 4 atoms of [x,y,z]", "type")

    def _ids(self, ids: Any, n: int, path: str, issues: list[ValidationIssue]) -> None:
        _require(isinstance(ids, list) and len(ids) == n, issues, path, f"expected {n} residue ids", "shape")
        if not isinstance(ids, list):
            return
        for i, rid in enumerate(ids):
            ok = isinstance(rid, list) and len(rid) == 2 and isinstance(rid[0], str) and _is_int(rid[1])
            _require(ok, issues, f"{path}[{i}]", "residue id must be [chain, seq_num]", "type")


# -----------------
# Public API
# -----------------
def validate_run_config(cfg: dict[str, Any]) -> tuple[bool, list[ValidationIssue]]:
    issues = RunConfigValidator().validate(cfg)
    return (len(issues) == 0, issues)


def assert_valid_run_config(cfg: dict[str, Any]) -> None:
    """Validate and raise ConfigValidationError with path-scoped messages if invalid."""
    ok, issues = validate_run_config(cfg)
    if not ok:
        lines = [f"- {str(i)}" for i in issues]
        raise ConfigValidationError("Run config validation failed:\n" + "\n".join(lines))


def validate_example_doc(doc: dict[str, Any]) -> tuple[bool, list[ValidationIssue]]:
    issues = ExampleDocValidator().validate(doc)
    return (len(issues) == 0, issues)


def assert_valid_example_doc(doc: dict[str, Any]) -> None:
    ok, issues = validate_example_doc(doc)
    if not ok:
        lines = [f"- {str(i)}" for i in issues]
        raise InvariantError("Example document validation failed:\n" + "\n".join(lines))


__all__ = [
    "ValidationIssue",
    "RunConfigValidator",
    "ExampleDocValidator",
    "validate_run_config",
    "assert_valid_run_config",
    "validate_example_doc",
    "assert_valid_example_doc",
]
