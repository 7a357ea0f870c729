"""Shared fixtures: scripted git repositories built with fixed identities
and timestamps so every test run sees byte-identical histories."""

import os
import subprocess

import pytest

T0 = 1600000000  # 2020-09-13 12:26:40 UTC, a Sunday
DAY = 86400

ALICE = ("alice", "a@x")
BOB = ("bob", "b@x")
CAROL = ("carol", "c@x")


def git(repo, *args, env_extra=None, check=True):
    env = os.environ.copy()
    env.update(env_extra or {})
    return subprocess.run(
        ["git", "-C", str(repo), *args],
        capture_output=True,
        check=check,
        env=env,
    )


def _ident_env(author, when):
    name, email = author
    stamp = "@%d +0000" % when
    return {
        "GIT_AUTHOR_NAME": name,
        "GIT_AUTHOR_EMAIL": email,
        "GIT_AUTHOR_DATE": stamp,
        "GIT_COMMITTER_NAME": name,
        "GIT_COMMITTER_EMAIL": email,
        "GIT_COMMITTER_DATE": stamp,
    }


class RepoBuilder:
    """Thin wrapper over git for building small scripted histories."""

    def __init__(self, path):
        self.path = str(path)
        os.makedirs(self.path, exist_ok=True)
        git(self.path, "init", "-q", "-b", "main")
        self.clock = T0

    def _tick(self, when):
        if when is None:
            self.clock += DAY
            return self.clock
        self.clock = max(self.clock, when)
        return when

    def commit(self, files=None, message="change", author=ALICE, when=None,
               delete=(), rename=()):
        when = self._tick(when)
        for old, new in rename:
            git(self.path, "mv", old, new)
        for path in delete:
            git(self.path, "rm", "-q", path)
        for path, content in (files or {}).items():
            full = os.path.join(self.path, path)
            os.makedirs(os.path.dirname(full) or self.path, exist_ok=True)
            with open(full, "w", encoding="utf-8") as fh:
                fh.write(content)
        git(self.path, "add", "-A")
        git(self.path, "commit", "-q", "--allow-empty", "-m", message,
            env_extra=_ident_env(author, when))
        return self.head()

    def branch(self, name):
        git(self.path, "branch", name)

    def checkout(self, name):
        git(self.path, "checkout", "-q", name)

    def merge(self, other, message, resolutions=None, author=ALICE, when=None):
        when = self._tick(when)
        git(self.path, "merge", "--no-commit", "--no-ff", "-q", other,
            env_extra=_ident_env(author, when), check=False)
        for path, content in (resolutions or {}).items():
            with open(os.path.join(self.path, path), "w", encoding="utf-8") as fh:
                fh.write(content)
        git(self.path, "add", "-A")
        git(self.path, "commit", "-q", "-m", message,
            env_extra=_ident_env(author, when))
        return self.head()

    def head(self):
        out = git(self.path, "rev-parse", "HEAD")
        return out.stdout.decode().strip()


@pytest.fixture
def repo_builder(tmp_path):
    def build(name="repo"):
        return RepoBuilder(tmp_path / name)

    return build


# ---------------------------------------------------------------------
# synthetic learnability corpus
#
# 480 payload commits plus 120 fix commits. Payload i is defective iff
# i % 4 == 0: its file plants a unique marker line that a later fix
# deletes. The signal is a strict AND of two modalities: the message
# keyword "turbo" appears iff i is even, and the file is large (30 lines
# vs 3) iff i % 4 < 2, so neither text nor tabular features alone can
# separate the positives (best single-modality F1 is 2/3).

CORPUS_AUTHORS = (ALICE, BOB, CAROL)
HOUR = 3600


def _payload_lines(i):
    big = i % 4 < 2
    count = 30 if big else 3
    lines = ["def f_%d_%d(): return %d" % (i, k, i * 1000 + k)
             for k in range(count)]
    if i % 4 == 0:
        lines[6] = "marker_%d = 'planted'" % i
    return lines


def _payload_message(i):
    if i % 2 == 0:
        return "add module %d with turbo boost" % i
    return "add module %d plain update" % i


def build_corpus(path, n_payload=480, fix_lag=5):
    """Write the corpus via fast-import; returns the repo path."""
    path = str(path)
    os.makedirs(path, exist_ok=True)
    git(path, "init", "-q", "-b", "main")

    schedule = []
    for i in range(n_payload):
        schedule.append(("payload", i))
        j = i - fix_lag
        if j >= 0 and j % 4 == 0:
            schedule.append(("fix", j))
    for j in range(max(0, n_payload - fix_lag), n_payload):
        if j % 4 == 0:
            schedule.append(("fix", j))

    chunks = []
    mark = 0
    prev = None
    when = T0
    for n, (kind, i) in enumerate(schedule):
        when = T0 + n * HOUR
        mark += 1
        if kind == "payload":
            author = CORPUS_AUTHORS[i % 3]
            message = _payload_message(i)
            content = "\n".join(_payload_lines(i)) + "\n"
        else:
            author = CORPUS_AUTHORS[(i + 1) % 3]
            message = "fix defect in module %d #%d" % (i, 1000 + i)
            lines = _payload_lines(i)
            del lines[6]
            content = "\n".join(lines) + "\n"
        name, email = author
        msg = message.encode()
        blob = content.encode()
        chunk = ["commit refs/heads/main", "mark :%d" % mark]
        chunk.append("author %s <%s> %d +0000" % (name, email, when))
        chunk.append("committer %s <%s> %d +0000" % (name, email, when))
        chunk.append("data %d" % len(msg))
        chunk.append(message)
        if prev is not None:
            chunk.append("from :%d" % prev)
        chunk.append("M 100644 inline src/m%d.py" % i)
        chunk.append("data %d" % len(blob))
        chunk.append(content.rstrip("\n"))
        chunks.append("\n".join(chunk))
        prev = mark
    stream = ("\n".join(chunks) + "\ndone\n").encode()
    subprocess.run(
        ["git", "-C", path, "fast-import", "--quiet", "--done"],
        input=stream,
        capture_output=True,
        check=True,
    )
    git(path, "checkout", "-q", "-f", "main")
    return path


def corpus_truth(n_payload=480):
    """{module index: defective} ground truth for payload commits."""
    return {i: i % 4 == 0 for i in range(n_payload)}


@pytest.fixture(scope="session")
def corpus_repo(tmp_path_factory):
    return build_corpus(tmp_path_factory.mktemp("corpus") / "repo")
