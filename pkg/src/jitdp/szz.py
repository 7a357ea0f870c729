"""Trace fix commits back to the commits that introduced the fixed lines.

For each fix, the deleted lines are blamed at the fix's first parent.
Attributions that land on meta-changes are stepped past instead of being
accepted: merge commits never count as origins (the line is mapped through
the merge's diff against its first parent and re-blamed there), and a
commit that only re-whitespaced a line is stepped through to the version
it reformatted. Attributions younger than the fix itself are dropped.
"""

import logging
import re
import threading
from dataclasses import dataclass, field

from .errors import BlameFailure, CorruptHistory, UnknownHash
from .gitcmd import ensure_repo, run_git
from .mining import _HUNK_RE, _parse_marker_path, _unquote_path

logger = logging.getLogger(__name__)

MAX_META_STEPS = 32

_BLAME_HEADER_RE = re.compile(r"^([0-9a-f]{40}) (\d+) (\d+)(?: \d+)?$")


@dataclass(frozen=True)
class Attribution:
    """One blamed line: where blame says it came from."""

    sha: str
    line: int  # line number in sha's version of the file
    path: str  # path in sha's version of the file
    author_time: int


@dataclass(frozen=True)
class Hunk:
    old_start: int
    old_count: int
    new_start: int
    new_count: int
    old_texts: tuple
    new_texts: tuple


@dataclass(frozen=True)
class DiffEntry:
    old_path: str | None
    new_path: str | None
    hunks: tuple


@dataclass(frozen=True)
class TraceResult:
    fix_hash: str
    inducing: tuple  # sorted unique commit hashes
    traced_lines: int  # deleted lines we attempted to attribute


class Repo:
    """Cached access to the blame and diff plumbing of one repository.

    Thread-safe for concurrent trace calls; the lock only guards cache
    dictionaries, so two threads may occasionally duplicate a git call.
    """

    def __init__(self, repo_path):
        ensure_repo(repo_path)
        self.repo_path = repo_path
        self._lock = threading.Lock()
        self._parents = {}
        self._blame = {}
        self._diff = {}

    def prime(self, records):
        """Seed the parent cache from already-mined commit records."""
        with self._lock:
            for record in records:
                self._parents[record.hash] = record.parent_hashes

    def parents(self, sha):
        with self._lock:
            if sha in self._parents:
                return self._parents[sha]
        out = run_git(self.repo_path, ["log", "-1", "--format=%P", sha])
        parents = tuple(out.decode().split())
        with self._lock:
            self._parents[sha] = parents
        return parents

    def blame(self, rev, path):
        """{final_line: Attribution} for the file as of rev."""
        key = (rev, path)
        with self._lock:
            if key in self._blame:
                return self._blame[key]
        try:
            out = run_git(
                self.repo_path,
                ["blame", "--line-porcelain", rev, "--", path],
            )
        except CorruptHistory as exc:
            raise BlameFailure(str(exc)) from exc
        table = _parse_blame(out.decode("utf-8", "replace"))
        with self._lock:
            self._blame[key] = table
        return table

    def diff_entries(self, old_rev, new_rev):
        """{new_path: DiffEntry} for the whole tree between two commits."""
        key = (old_rev, new_rev)
        with self._lock:
            if key in self._diff:
                return self._diff[key]
        out = run_git(
            self.repo_path,
            ["diff", "-M", "-U0", "--no-color", old_rev, new_rev],
        )
        entries = _parse_diff(out.decode("utf-8", "replace"))
        with self._lock:
            self._diff[key] = entries
        return entries


def _parse_blame(text):
    table = {}
    sha = line_no = final = None
    author_time = 0
    filename = None
    for raw in text.split("\n"):
        m = _BLAME_HEADER_RE.match(raw)
        if m:
            sha, line_no, final = m.group(1), int(m.group(2)), int(m.group(3))
            continue
        if raw.startswith("author-time "):
            author_time = int(raw[len("author-time "):])
        elif raw.startswith("filename "):
            filename = raw[len("filename "):]
        elif raw.startswith("\t") and sha is not None:
            table[final] = Attribution(
                sha=sha, line=line_no, path=filename, author_time=author_time
            )
            sha = None
    return table


def _parse_diff(text):
    """Like the mining patch parser but keeps hunk body texts for
    whitespace comparison."""
    entries = {}
    old = new = None
    kind_rename = False
    in_hunks = False
    hunks = []
    cur = None  # [old_start, old_count, new_start, new_count, old_texts, new_texts]

    def flush():
        nonlocal old, new, hunks, cur, kind_rename, in_hunks
        if cur is not None:
            hunks.append(_finish_hunk(cur))
            cur = None
        if old is not None or new is not None:
            path = new if new is not None else old
            entries[path] = DiffEntry(old_path=old, new_path=new, hunks=tuple(hunks))
        old = new = None
        kind_rename = False
        in_hunks = False
        hunks = []

    for line in text.split("\n"):
        if line.startswith("diff --git "):
            flush()
            continue
        if line.startswith("rename from ") and not in_hunks:
            old = _unquote_path(line[len("rename from "):])
            kind_rename = True
        elif line.startswith("rename to ") and not in_hunks:
            new = _unquote_path(line[len("rename to "):])
        elif line.startswith("--- ") and not in_hunks:
            if not kind_rename:  # rename with edits: keep the from/to paths
                old = _parse_marker_path(line[4:])
        elif line.startswith("+++ ") and not in_hunks:
            if not kind_rename:
                new = _parse_marker_path(line[4:])
        else:
            m = _HUNK_RE.match(line)
            if m:
                in_hunks = True
                if cur is not None:
                    hunks.append(_finish_hunk(cur))
                cur = [
                    int(m.group(1)),
                    int(m.group(2)) if m.group(2) is not None else 1,
                    int(m.group(3)),
                    int(m.group(4)) if m.group(4) is not None else 1,
                    [],
                    [],
                ]
            elif cur is not None and line.startswith("-"):
                cur[4].append(line[1:])
            elif cur is not None and line.startswith("+"):
                cur[5].append(line[1:])
    flush()
    return entries


def _finish_hunk(parts):
    a, b, c, d, old_texts, new_texts = parts
    return Hunk(a, b, c, d, tuple(old_texts), tuple(new_texts))


def _ws_equal(a, b):
    return " ".join(a.split()) == " ".join(b.split())


def _map_new_to_old(hunks, line):
    """Map a new-side line number back through a diff.

    Returns (old_line, kind, texts): kind is "paired" (line replaces a
    specific old line, texts holds the old/new strings), "added" (no old
    counterpart), or "context" (untouched by the diff).
    """
    offset = 0
    for h in hunks:
        if h.new_count > 0 and h.new_start <= line < h.new_start + h.new_count:
            k = line - h.new_start
            if k < h.old_count:
                return h.old_start + k, "paired", (h.old_texts[k], h.new_texts[k])
            return None, "added", None
        if line >= h.new_start + max(h.new_count, 1):
            offset += h.old_count - h.new_count
            continue
        break
    return line + offset, "context", None


def _resolve_origin(repo, att, warn):
    """Step past meta-changes until a genuine origin commit is found.

    Returns None when the line dead-ends inside a merge (pure addition by
    conflict resolution with no old-side counterpart).
    """
    visited = set()
    for _ in range(MAX_META_STEPS):
        key = (att.sha, att.path, att.line)
        if key in visited:
            warn({"event": "blame_cycle", "hash": att.sha, "path": att.path})
            return att
        visited.add(key)
        parents = repo.parents(att.sha)
        if not parents:
            return att  # root commit authored the line
        is_merge = len(parents) > 1

        entry = repo.diff_entries(parents[0], att.sha).get(att.path)
        if entry is None:
            if not is_merge:
                return att
            old_path, old_line, kind, texts = att.path, att.line, "context", None
        else:
            old_path = entry.old_path if entry.old_path is not None else att.path
            old_line, kind, texts = _map_new_to_old(entry.hunks, att.line)

        if is_merge:
            if kind == "added":
                warn(
                    {
                        "event": "merge_introduced_line",
                        "hash": att.sha,
                        "path": att.path,
                        "line": att.line,
                    }
                )
                return None
        else:
            if kind == "paired" and texts is not None and _ws_equal(*texts):
                pass  # whitespace-only touch, keep walking
            else:
                return att  # the commit genuinely changed or added the line

        try:
            table = repo.blame(parents[0], old_path)
        except BlameFailure as exc:
            warn({"event": "blame_failed", "hash": parents[0], "path": old_path,
                  "detail": str(exc)})
            return None if is_merge else att
        nxt = table.get(old_line)
        if nxt is None:
            warn({"event": "line_unmapped", "hash": parents[0], "path": old_path,
                  "line": old_line})
            return None if is_merge else att
        att = nxt
    warn({"event": "meta_chain_truncated", "hash": att.sha, "path": att.path})
    return att


def trace_fix(repo, fix, warn=None):
    """Attribute every line the fix deleted; return the inducing commits."""
    warn = warn or (lambda payload: logger.debug("szz warning: %s", payload))
    inducing = set()
    traced = 0
    if not fix.parent_hashes:
        return TraceResult(fix_hash=fix.hash, inducing=(), traced_lines=0)
    parent = fix.parent_hashes[0]
    for fc in fix.files:
        if fc.old_path is None or not fc.deleted_line_numbers:
            continue
        try:
            table = repo.blame(parent, fc.old_path)
        except BlameFailure as exc:
            warn({"event": "blame_failed", "hash": parent, "path": fc.old_path,
                  "detail": str(exc)})
            continue
        for line_no in fc.deleted_line_numbers:
            traced += 1
            att = table.get(line_no)
            if att is None:
                warn({"event": "line_missing_from_blame", "hash": fix.hash,
                      "path": fc.old_path, "line": line_no})
                continue
            origin = _resolve_origin(repo, att, warn)
            if origin is None:
                continue
            if origin.sha == fix.hash:
                continue
            if origin.author_time > fix.author_time:
                warn({"event": "origin_newer_than_fix", "hash": origin.sha,
                      "fix": fix.hash})
                continue
            inducing.add(origin.sha)
    return TraceResult(
        fix_hash=fix.hash,
        inducing=tuple(sorted(inducing)),
        traced_lines=traced,
    )


def trace_all(repo, records, fix_pattern=None, jobs=1, warn=None):
    """Trace every fix commit in the record stream.

    Fixes are non-merge commits whose message matches the fix pattern and
    that delete at least one source line. Returns TraceResults in commit
    order regardless of jobs.
    """
    from .mining import is_fix

    repo.prime(records)
    fixes = [
        r
        for r in records
        if not r.is_merge
        and is_fix(r, fix_pattern)
        and any(fc.deleted_line_numbers for fc in r.files)
    ]
    if jobs <= 1 or len(fixes) <= 1:
        return [trace_fix(repo, fix, warn) for fix in fixes]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda fix: trace_fix(repo, fix, warn), fixes))


@dataclass(frozen=True)
class Label:
    hash: str
    buggy: bool
    fixed_by: tuple  # sorted fix hashes that blamed this commit


def label_dataset(records, trace_results):
    """Fold trace results into one label per mined commit."""
    known = {r.hash for r in records}
    fixed_by = {}
    for tr in trace_results:
        if tr.fix_hash not in known:
            raise UnknownHash(tr.fix_hash)
        for sha in tr.inducing:
            if sha not in known:
                raise UnknownHash(sha)
            fixed_by.setdefault(sha, set()).add(tr.fix_hash)
    labels = {}
    for record in records:
        fixes = fixed_by.get(record.hash, ())
        labels[record.hash] = Label(
            hash=record.hash,
            buggy=bool(fixes),
            fixed_by=tuple(sorted(fixes)),
        )
    return labels
