"""Thin subprocess wrapper around the git command line.

All repository access goes through git's plumbing with machine-readable
flags; nothing in the package links against a git library.
"""

import logging
import subprocess

from .errors import CorruptHistory, RepoNotFound

logger = logging.getLogger(__name__)


def run_git(repo_path, args, check=True):
    """Run ``git -C repo_path *args`` and return stdout as bytes."""
    cmd = ["git", "-C", str(repo_path)] + list(args)
    logger.debug("exec: %s", " ".join(cmd))
    proc = subprocess.run(cmd, capture_output=True)
    if check and proc.returncode != 0:
        raise CorruptHistory(
            "git %s failed: %s" % (args[0], proc.stderr.decode("utf-8", "replace").strip())
        )
    return proc.stdout


def ensure_repo(repo_path):
    """Raise RepoNotFound unless repo_path holds a readable git repository."""
    proc = subprocess.run(
        ["git", "-C", str(repo_path), "rev-parse", "--git-dir"], capture_output=True
    )
    if proc.returncode != 0:
        raise RepoNotFound("no git repository at %s" % repo_path)


def resolve_head(repo_path, rev="HEAD"):
    """Resolve rev to a commit hash, or None for a repository with no commits."""
    proc = subprocess.run(
        ["git", "-C", str(repo_path), "rev-parse", "--verify", rev + "^{commit}"],
        capture_output=True,
    )
    if proc.returncode != 0:
        return None
    return proc.stdout.decode().strip()


class BlobReader:
    """Persistent ``git cat-file --batch`` process for pre-image line counts."""

    def __init__(self, repo_path):
        self._proc = subprocess.Popen(
            ["git", "-C", str(repo_path), "cat-file", "--batch"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )

    def line_count(self, rev, path):
        """Number of lines in ``rev:path``, or None when the blob is absent."""
        spec = "%s:%s" % (rev, path)
        self._proc.stdin.write(spec.encode() + b"\n")
        self._proc.stdin.flush()
        header = self._proc.stdout.readline()
        if not header:
            raise CorruptHistory("cat-file stream ended unexpectedly for %s" % spec)
        parts = header.split()
        if parts[-1] in (b"missing", b"ambiguous"):
            return None
        size = int(parts[2])
        body = self._proc.stdout.read(size + 1)  # content plus trailing LF
        content = body[:size]
        if not content:
            return 0
        n = content.count(b"\n")
        if not content.endswith(b"\n"):
            n += 1
        return n

    def close(self):
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
