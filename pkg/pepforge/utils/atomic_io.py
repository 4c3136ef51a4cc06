# Atomic output writers
#
# Every file is written to a temporary sibling and moved into place with os.replace, so a
# reader never sees a half-written output. staged_dir() applies the same commit-or-rollback
# rule to a whole directory of outputs.
#
# Public API:
# - write_text(path, text) / write_json(path, obj) / write_csv(path, header, rows)
# - staged_dir(target, request_id) context manager -> temp directory, committed on success

from __future__ import annotations

import csv
import io
import json
import logging
import os
import shutil
import tempfile
from collections.abc import Iterable, Iterator, Sequence
from contextlib import contextmanager
from typing import Any

logger = logging.getLogger(__name__)


def write_text(path: str, text: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def dumps_json(obj: Any) -> str:
    """Stable JSON text: insertion key order, indent 2, trailing newline."""
    return json.dumps(obj, indent=2, ensure_ascii=True, allow_nan=False) + "\n"


def write_json(path: str, obj: Any) -> None:
    write_text(path, dumps_json(obj))


def write_csv(
    path: str,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    comment: str | None = None,
) -> None:
    """LF line endings; an optional leading "# comment" line documents the run."""
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    write_text(path, buf.getvalue())


@contextmanager
def staged_dir(target: str, request_id: str = "run") -> Iterator[str]:
    """
    Yield a temporary directory next to `target`. On normal exit its contents are committed
    into `target` (files replaced one by one); on error the temporary directory is removed and
    `target` is left as it was.
    """
    parent = os.path.dirname(os.path.abspath(target)) or "."
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=f".stage-{request_id}-", dir=parent)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        logger.info(f"[{request_id}] Rolled back staged outputs for {target}")
        raise
    os.makedirs(target, exist_ok=True)
    for root, _dirs, files in os.walk(tmp):
        rel = os.path.relpath(root, tmp)
        dest_root = target if rel == "." else os.path.join(target, rel)
        os.makedirs(dest_root, exist_ok=True)
        for name in sorted(files):
            os.replace(os.path.join(root, name), os.path.join(dest_root, name))
    shutil.rmtree(tmp, ignore_errors=True)
    logger.debug(f"[{request_id}] Committed staged outputs into {target}")


__all__ = ["write_text", "dumps_json", "write_json", "write_csv", "staged_dir"]
