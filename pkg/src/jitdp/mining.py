"""Walk a git history and compute per-commit change-level features.

The walk is two passes over ``git log`` plumbing output: one NUL-delimited
metadata pass, one ``-p -U0`` patch pass keyed by commit hash. Pre-image
line counts come from a persistent ``cat-file --batch`` process. Records
are emitted oldest to newest by author time, ties broken by topological
order, so the incremental :class:`HistoryIndex` never sees the future.
"""

import logging
import math
import re
from dataclasses import dataclass, field

from .errors import CorruptHistory, MissingHistory
from .gitcmd import BlobReader, ensure_repo, resolve_head, run_git

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0
SECONDS_PER_YEAR = 31557600.0  # Julian year, the usual experience decay base

DEFAULT_EXTENSIONS = (
    ".c", ".cc", ".cpp", ".h", ".hpp", ".py", ".rs", ".go", ".java", ".js", ".ts",
)
DEFAULT_EXCLUDES = ("test/", "docs/", "third_party/")

# Word-boundary keywords plus issue references like "#512". "prefix" must
# not match, which \b guarantees since the whole word is \w characters.
DEFAULT_FIX_PATTERN = r"\b(?:fix(?:es|ed)?|bug|defect|fault|patch)\b|#\d+"


@dataclass(frozen=True)
class SourceFilter:
    """Which paths count as source files for mining and metrics."""

    extensions: tuple = DEFAULT_EXTENSIONS
    exclude_patterns: tuple = DEFAULT_EXCLUDES

    def accepts(self, path):
        if any(pat in path for pat in self.exclude_patterns):
            return False
        return any(path.endswith(ext) for ext in self.extensions)


@dataclass(frozen=True)
class FileChange:
    """One file's delta within a commit, from the -U0 patch."""

    old_path: str | None
    new_path: str | None
    change_kind: str  # add | modify | delete | rename
    lines_added: int
    lines_deleted: int
    lines_before: int
    deleted_line_numbers: tuple

    @property
    def path(self):
        """Post-change location; deletes keep their pre-image path."""
        return self.new_path if self.new_path is not None else self.old_path


@dataclass(frozen=True)
class CommitRecord:
    hash: str
    parent_hashes: tuple
    author_id: str
    author_time: int
    message: str
    files: tuple

    @property
    def is_merge(self):
        return len(self.parent_hashes) > 1


@dataclass(frozen=True)
class ChangeMetrics:
    """The 14 change-level features for one non-merge commit."""

    ns: int
    nd: int
    nf: int
    entropy: float
    la: int
    ld: int
    lt: int
    fix: bool
    ndev: int
    age: float
    nuc: int
    exp: int
    rexp: float
    sexp: int

    NUMERIC_FIELDS = (
        "ns", "nd", "nf", "entropy", "la", "ld", "lt",
        "ndev", "age", "nuc", "exp", "rexp", "sexp",
    )

    def as_dict(self):
        d = {name: getattr(self, name) for name in self.NUMERIC_FIELDS}
        d["fix"] = self.fix
        return d


def is_fix(commit, pattern=None):
    """True when the lowercased message matches the fix pattern."""
    message = commit.message if isinstance(commit, CommitRecord) else commit
    rx = re.compile(pattern or DEFAULT_FIX_PATTERN)
    return rx.search(message.lower()) is not None


def subsystem_of(path):
    """First path segment; a root-level file is its own subsystem."""
    return path.split("/", 1)[0]


def directory_of(path):
    """Full containing directory; root-level files map to "/"."""
    head, _, _ = path.rpartition("/")
    return head if head else "/"


# ---------------------------------------------------------------------
# patch stream parsing


def _unquote_path(raw):
    """Undo git's C-style path quoting ("pa\\tth" with octal escapes)."""
    if not raw.startswith('"'):
        return raw
    out = []
    i = 1
    while i < len(raw):
        ch = raw[i]
        if ch == '"':
            break
        if ch == "\\":
            nxt = raw[i + 1]
            if nxt in "01234567":
                out.append(chr(int(raw[i + 1 : i + 4], 8)))
                i += 4
                continue
            mapped = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}.get(nxt, nxt)
            out.append(mapped)
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def _strip_prefix(path, prefix):
    return path[len(prefix):] if path.startswith(prefix) else path


def _parse_marker_path(rest):
    """Path from a ``--- a/...`` / ``+++ b/...`` marker line; None for /dev/null."""
    rest = rest.rstrip("\n")
    if rest.endswith("\t"):  # git appends a tab when the name contains spaces
        rest = rest[:-1]
    if rest == "/dev/null":
        return None
    path = _unquote_path(rest)
    # the a/ (old) or b/ (new) prefix sits inside the quotes when quoted
    if path[:2] in ("a/", "b/"):
        path = path[2:]
    return path


def _paths_from_diff_git(line):
    """Best-effort (old, new) from a ``diff --git a/X b/Y`` header.

    Only needed for blocks with no ---/+++/rename lines (mode-only and
    binary changes), where old and new are the same path.
    """
    rest = line[len("diff --git "):]
    if rest.startswith('"'):
        # two quoted paths separated by a space
        end = rest.index('" ', 1)
        old = _unquote_path(rest[: end + 1])
        new = _unquote_path(rest[end + 2 :])
        return _strip_prefix(old, "a/"), _strip_prefix(new, "b/")
    body = rest[2:] if rest.startswith("a/") else rest
    # identical paths: body == X + " b/" + X
    if (len(body) - 3) % 2 == 0:
        half = (len(body) - 3) // 2
        if body[:half] == body[half + 3 :] and body[half : half + 3] == " b/":
            return body[:half], body[:half]
    left, _, right = body.partition(" b/")
    return left, right


_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


class _FileParse:
    __slots__ = (
        "old", "new", "kind", "la", "ld", "deleted", "fallback",
        "has_markers", "in_hunks",
    )

    def __init__(self, fallback):
        self.old = None
        self.new = None
        self.kind = "modify"
        self.la = 0
        self.ld = 0
        self.deleted = []
        self.fallback = fallback
        self.has_markers = False
        self.in_hunks = False

    def finish(self):
        old, new = self.old, self.new
        if not self.has_markers and self.kind == "modify":
            # mode-only or binary block without ---/+++ lines
            old, new = old or self.fallback[0], new or self.fallback[1]
        if self.kind == "add":
            old = None
        if self.kind == "delete":
            new = None
        return FileChange(
            old_path=old,
            new_path=new,
            change_kind=self.kind,
            lines_added=self.la,
            lines_deleted=self.ld,
            lines_before=0,  # filled in later from the blob store
            deleted_line_numbers=tuple(self.deleted),
        )


def parse_patch(block):
    """Parse one commit's ``-p -U0`` output into raw FileChange objects.

    ``lines_before`` is left at 0 here; :func:`mine_history` fills it from
    the parent blob.
    """
    changes = []
    cur = None
    for line in block.split("\n"):
        if line.startswith("diff --git "):
            if cur is not None:
                changes.append(cur)
            cur = _FileParse(_paths_from_diff_git(line))
            continue
        if cur is None:
            continue
        if line.startswith("new file mode"):
            cur.kind = "add"
        elif line.startswith("deleted file mode"):
            cur.kind = "delete"
        elif line.startswith("rename from "):
            cur.kind = "rename"
            cur.old = _unquote_path(line[len("rename from "):])
        elif line.startswith("rename to "):
            cur.new = _unquote_path(line[len("rename to "):])
        elif line.startswith("--- ") and not cur.in_hunks:
            # a deleted body line can also start with "--- "; real path
            # markers only precede the first hunk header
            cur.has_markers = True
            if cur.old is None:
                cur.old = _parse_marker_path(line[4:])
        elif line.startswith("+++ ") and not cur.in_hunks:
            cur.has_markers = True
            if cur.new is None:
                cur.new = _parse_marker_path(line[4:])
        else:
            m = _HUNK_RE.match(line)
            if m:
                cur.in_hunks = True
                old_start = int(m.group(1))
                old_count = int(m.group(2)) if m.group(2) is not None else 1
                new_count = int(m.group(4)) if m.group(4) is not None else 1
                cur.la += new_count
                cur.ld += old_count
                cur.deleted.extend(range(old_start, old_start + old_count))
    if cur is not None:
        changes.append(cur)
    return [c.finish() for c in changes]


# ---------------------------------------------------------------------
# history walk


def _log_metadata(repo_path, rev):
    out = run_git(
        repo_path,
        [
            "log", rev, "--topo-order", "--reverse", "-z",
            "--encoding=UTF-8",
            "--format=%H%x02%P%x02%an <%ae>%x02%at%x02%B",
        ],
    )
    entries = []
    for record in out.split(b"\x00"):
        if not record:
            continue
        parts = record.decode("utf-8", "replace").split("\x02", 4)
        if len(parts) != 5:
            raise CorruptHistory("unparseable log record: %r" % record[:80])
        sha, parents, author, at, message = parts
        entries.append(
            {
                "hash": sha,
                "parents": tuple(parents.split()) if parents else (),
                "author": author.lower(),
                "time": int(at),
                "message": message,
            }
        )
    return entries


def _log_patches(repo_path, rev, rename_threshold):
    rename_flag = (
        "--find-renames=%d%%" % rename_threshold
        if rename_threshold is not None
        else "--find-renames"
    )
    out = run_git(
        repo_path,
        [
            "log", rev, "--topo-order", "--reverse",
            "-p", "-U0", "--no-color", rename_flag,
            "--format=%x01%H",
        ],
    )
    blocks = {}
    current = None
    buf = []
    for line in out.decode("utf-8", "replace").split("\n"):
        if line.startswith("\x01"):
            if current is not None:
                blocks[current] = "\n".join(buf)
            current = line[1:].strip()
            buf = []
        else:
            buf.append(line)
    if current is not None:
        blocks[current] = "\n".join(buf)
    return blocks


def mine_history(repo_path, source_filter=None, rev="HEAD", rename_threshold=None):
    """Yield one CommitRecord per commit reachable from rev.

    Merge commits are emitted with an empty file list (SZZ needs to see
    them; metrics skip them). Non-source files are filtered out of each
    record's file list, so a docs-only commit has files == ().
    """
    source_filter = source_filter or SourceFilter()
    ensure_repo(repo_path)
    head = resolve_head(repo_path, rev)
    if head is None:
        return
    entries = _log_metadata(repo_path, head)
    blocks = _log_patches(repo_path, head, rename_threshold)

    records = []
    with BlobReader(repo_path) as blobs:
        for entry in entries:
            sha = entry["hash"]
            files = ()
            if len(entry["parents"]) <= 1:
                raw = parse_patch(blocks.get(sha, ""))
                kept = []
                for fc in raw:
                    if fc.path is None or not source_filter.accepts(fc.path):
                        continue
                    lines_before = 0
                    if fc.old_path is not None and entry["parents"]:
                        n = blobs.line_count(entry["parents"][0], fc.old_path)
                        if n is None:
                            raise CorruptHistory(
                                "missing pre-image blob for %s" % fc.old_path, hash=sha
                            )
                        lines_before = n
                    kept.append(
                        FileChange(
                            old_path=fc.old_path,
                            new_path=fc.new_path,
                            change_kind=fc.change_kind,
                            lines_added=fc.lines_added,
                            lines_deleted=fc.lines_deleted,
                            lines_before=lines_before,
                            deleted_line_numbers=fc.deleted_line_numbers,
                        )
                    )
                files = tuple(kept)
            records.append(
                CommitRecord(
                    hash=sha,
                    parent_hashes=entry["parents"],
                    author_id=entry["author"],
                    author_time=entry["time"],
                    message=entry["message"],
                    files=files,
                )
            )
    # oldest -> newest by author time; stable sort keeps topological ties
    records.sort(key=lambda r: r.author_time)
    yield from records


# ---------------------------------------------------------------------
# incremental metric state


@dataclass
class HistoryIndex:
    """Per-file and per-author state over all commits processed so far.

    Keyed by path; a rename migrates the old path's accumulated history
    into the new path. Merge commits are marked seen but contribute no
    file or author state (they carry no diff of their own here).
    """

    seen: set = field(default_factory=set)
    file_authors: dict = field(default_factory=dict)
    file_last_time: dict = field(default_factory=dict)
    file_commits: dict = field(default_factory=dict)
    author_commit_times: dict = field(default_factory=dict)
    author_subsystem_commits: dict = field(default_factory=dict)

    def add(self, commit):
        self.seen.add(commit.hash)
        if commit.is_merge:
            return
        subsystems = set()
        for fc in commit.files:
            path = fc.path
            if fc.change_kind == "rename" and fc.old_path in self.file_authors:
                self._migrate(fc.old_path, path)
            self.file_authors.setdefault(path, set()).add(commit.author_id)
            self.file_last_time[path] = commit.author_time
            self.file_commits.setdefault(path, set()).add(commit.hash)
            subsystems.add(subsystem_of(path))
        self.author_commit_times.setdefault(commit.author_id, []).append(
            commit.author_time
        )
        per_sub = self.author_subsystem_commits.setdefault(commit.author_id, {})
        for sub in subsystems:
            per_sub.setdefault(sub, set()).add(commit.hash)

    def _migrate(self, old_path, new_path):
        self.file_authors.setdefault(new_path, set()).update(
            self.file_authors.pop(old_path)
        )
        self.file_commits.setdefault(new_path, set()).update(
            self.file_commits.pop(old_path, set())
        )
        old_time = self.file_last_time.pop(old_path, None)
        if old_time is not None:
            prev = self.file_last_time.get(new_path)
            self.file_last_time[new_path] = old_time if prev is None else max(prev, old_time)


def compute_metrics(commit, history_index, fix_pattern=None):
    """Table-style change features for one non-merge commit with source files."""
    if commit.is_merge:
        raise ValueError("metrics are undefined for merge commits")
    if not commit.files:
        raise ValueError("metrics need at least one source file change")
    if commit.hash in history_index.seen:
        raise MissingHistory("commit %s already indexed; ordering is stale" % commit.hash)
    for parent in commit.parent_hashes:
        if parent not in history_index.seen:
            raise MissingHistory(
                "index lacks parent %s of %s" % (parent, commit.hash)
            )

    paths = [fc.path for fc in commit.files]
    subsystems = {subsystem_of(p) for p in paths}
    directories = {directory_of(p) for p in paths}
    nf = len(commit.files)

    churn = [fc.lines_added + fc.lines_deleted for fc in commit.files]
    total_churn = sum(churn)
    if nf <= 1 or total_churn == 0:
        entropy = 0.0
    else:
        acc = 0.0
        for c in churn:
            if c > 0:
                p = c / total_churn
                acc -= p * math.log2(p)
        entropy = acc / math.log2(nf)

    la = sum(fc.lines_added for fc in commit.files)
    ld = sum(fc.lines_deleted for fc in commit.files)
    lt = sum(fc.lines_before for fc in commit.files)

    authors = set()
    prior_commits = set()
    age_sum = 0.0
    for fc in commit.files:
        # a renamed file carries the history of its old path; the index
        # migrates that state only when this commit is added, so look up
        # both names here (union of authors/commits, newest touch time)
        keys = [fc.path]
        if fc.change_kind == "rename" and fc.old_path is not None:
            keys.append(fc.old_path)
        last = None
        for key in keys:
            authors.update(history_index.file_authors.get(key, ()))
            prior_commits.update(history_index.file_commits.get(key, ()))
            touched = history_index.file_last_time.get(key)
            if touched is not None:
                last = touched if last is None else max(last, touched)
        if last is not None:
            age_sum += max(0.0, (commit.author_time - last) / SECONDS_PER_DAY)

    prior_times = history_index.author_commit_times.get(commit.author_id, [])
    exp = len(prior_times)
    rexp = 0.0
    for t in prior_times:
        rexp += 1.0 / ((commit.author_time - t) / SECONDS_PER_YEAR + 1.0)

    per_sub = history_index.author_subsystem_commits.get(commit.author_id, {})
    sub_commits = set()
    for sub in subsystems:
        sub_commits.update(per_sub.get(sub, ()))

    return ChangeMetrics(
        ns=len(subsystems),
        nd=len(directories),
        nf=nf,
        entropy=entropy,
        la=la,
        ld=ld,
        lt=lt,
        fix=is_fix(commit, fix_pattern),
        ndev=len(authors),
        age=age_sum / nf,
        nuc=len(prior_commits),
        exp=exp,
        rexp=rexp,
        sexp=len(sub_commits),
    )


def compute_all_metrics(records, fix_pattern=None):
    """Metrics for every eligible record, in mining order.

    Returns {hash: ChangeMetrics}; merges and zero-source-file commits are
    indexed but get no metrics.
    """
    index = HistoryIndex()
    out = {}
    for record in records:
        if not record.is_merge and record.files:
            out[record.hash] = compute_metrics(record, index, fix_pattern)
        index.add(record)
    return out
