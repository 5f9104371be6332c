"""A faithful in-memory file system behind the FS model's extern surface."""

from __future__ import annotations

from dataclasses import dataclass

from ..constants import CONSTANTS as C
from ..errors import InvalidPath
from ..trusted import canonicalize, dirname
from .base import ExternResult, ServiceBinding

O_ACCMODE, O_RDONLY, O_WRONLY = C["O_ACCMODE"], C["O_RDONLY"], C["O_WRONLY"]


@dataclass
class Inode:
    isdir: bool = False
    mode: int = 0
    data: bytes = b""


@dataclass
class OpenFile:
    ino: int
    off: int
    flags: int


class MemFS:
    """Single-process in-memory FS; descriptors are the lowest free number >= 3."""

    def __init__(self):
        self.cwd = "/"
        self.umask = 0o022
        self.paths = {"/": 1}
        self.inodes = {1: Inode(isdir=True, mode=0o755)}
        self.fds = {}
        self.next_ino = 2

    def _canon(self, path):
        try:
            return canonicalize(self.cwd, path)
        except InvalidPath:
            return None

    def _new_inode(self, isdir, mode):
        ino = self.next_ino
        self.next_ino += 1
        self.inodes[ino] = Inode(isdir=isdir, mode=mode & ~self.umask & 0o777)
        return ino

    def _parent_error(self, p):
        d = dirname(p)
        if d not in self.paths:
            return -C["ENOENT"]
        if not self.inodes[self.paths[d]].isdir:
            return -C["ENOTDIR"]
        return 0

    @staticmethod
    def _splice(data, pos, chunk):
        if len(data) < pos:
            data = data + b"\0" * (pos - len(data))
        return data[:pos] + chunk + data[pos + len(chunk):]

    # -- extern routines ------------------------------------------------------

    def open(self, path, flags, mode):
        p = self._canon(path)
        if p is None:
            return -C["ENOENT"]
        acc = flags & O_ACCMODE
        if acc == O_ACCMODE:
            return -C["EINVAL"]
        ino = self.paths.get(p)
        if ino is None:
            if not flags & C["O_CREAT"]:
                return -C["ENOENT"]
            err = self._parent_error(p)
            if err:
                return err
            ino = self._new_inode(False, mode)
            self.paths[p] = ino
        else:
            node = self.inodes[ino]
            if flags & C["O_CREAT"] and flags & C["O_EXCL"]:
                return -C["EEXIST"]
            if node.isdir and acc != O_RDONLY:
                return -C["EISDIR"]
            if acc != O_WRONLY and not node.mode & 0o400:
                return -C["EACCES"]
            if acc != O_RDONLY and not node.mode & 0o200:
                return -C["EACCES"]
        if flags & C["O_TRUNC"] and acc != O_RDONLY:
            self.inodes[ino].data = b""
        fd = 3
        while fd in self.fds:
            fd += 1
        self.fds[fd] = OpenFile(ino, 0, flags)
        return fd

    def close(self, fd):
        if self.fds.pop(fd, None) is None:
            return -C["EBADF"]
        return 0

    def _readable(self, fd):
        f = self.fds.get(fd)
        if f is None or f.flags & O_ACCMODE == O_WRONLY:
            return None, -C["EBADF"]
        if self.inodes[f.ino].isdir:
            return None, -C["EISDIR"]
        return f, 0

    def read(self, fd, buf, cnt):
        f, err = self._readable(fd)
        if err:
            return err
        if len(buf) < cnt:
            return -C["EFAULT"]
        chunk = self.inodes[f.ino].data[f.off:f.off + cnt]
        f.off += len(chunk)
        return ExternResult(len(chunk), {1: chunk + buf[len(chunk):]})

    def pread(self, fd, buf, cnt, pos):
        f, err = self._readable(fd)
        if err:
            return err
        if pos < 0:
            return -C["EINVAL"]
        if len(buf) < cnt:
            return -C["EFAULT"]
        chunk = self.inodes[f.ino].data[pos:pos + cnt]
        return ExternResult(len(chunk), {1: chunk + buf[len(chunk):]})

    def _writable(self, fd):
        f = self.fds.get(fd)
        if f is None or f.flags & O_ACCMODE == O_RDONLY:
            return None
        return f

    def write(self, fd, buf, cnt):
        f = self._writable(fd)
        if f is None:
            return -C["EBADF"]
        if len(buf) < cnt:
            return -C["EFAULT"]
        node = self.inodes[f.ino]
        node.data = self._splice(node.data, f.off, bytes(buf[:cnt]))
        f.off += cnt
        return cnt

    def pwrite(self, fd, buf, cnt, pos):
        f = self._writable(fd)
        if f is None:
            return -C["EBADF"]
        if pos < 0:
            return -C["EINVAL"]
        if len(buf) < cnt:
            return -C["EFAULT"]
        node = self.inodes[f.ino]
        node.data = self._splice(node.data, pos, bytes(buf[:cnt]))
        return cnt

    def lseek(self, fd, off, whence):
        f = self.fds.get(fd)
        if f is None:
            return -C["EBADF"]
        if whence == C["SEEK_SET"]:
            target = off
        elif whence == C["SEEK_CUR"]:
            target = f.off + off
        elif whence == C["SEEK_END"]:
            target = len(self.inodes[f.ino].data) + off
        else:
            return -C["EINVAL"]
        if target < 0:
            return -C["EINVAL"]
        f.off = target
        return target

    def unlink(self, path):
        p = self._canon(path)
        if p is None or p not in self.paths:
            return -C["ENOENT"]
        if self.inodes[self.paths[p]].isdir:
            return -C["EISDIR"]
        del self.paths[p]
        return 0

    def fstat(self, fd):
        f = self.fds.get(fd)
        if f is None:
            return -C["EBADF"]
        return len(self.inodes[f.ino].data)

    def lstat(self, path):
        p = self._canon(path)
        if p is None or p not in self.paths:
            return -C["ENOENT"]
        return len(self.inodes[self.paths[p]].data)

    def access(self, path, amode):
        p = self._canon(path)
        if amode & ~7:
            return -C["EINVAL"]
        if p is None or p not in self.paths:
            return -C["ENOENT"]
        m = self.inodes[self.paths[p]].mode
        for bit, need in ((C["R_OK"], 0o400), (C["W_OK"], 0o200), (C["X_OK"], 0o100)):
            if amode & bit and not m & need:
                return -C["EACCES"]
        return 0

    def mkdir(self, path, mode):
        p = self._canon(path)
        if p is None:
            return -C["ENOENT"]
        if p in self.paths:
            return -C["EEXIST"]
        err = self._parent_error(p)
        if err:
            return err
        self.paths[p] = self._new_inode(True, mode)
        return 0

    def _resize(self, ino, length):
        node = self.inodes[ino]
        node.data = node.data[:length] + b"\0" * max(0, length - len(node.data))

    def truncate(self, path, length):
        p = self._canon(path)
        if p is None or p not in self.paths:
            return -C["ENOENT"]
        node = self.inodes[self.paths[p]]
        if node.isdir:
            return -C["EISDIR"]
        if length < 0:
            return -C["EINVAL"]
        if not node.mode & 0o200:
            return -C["EACCES"]
        self._resize(self.paths[p], length)
        return 0

    def ftruncate(self, fd, length):
        f = self.fds.get(fd)
        if f is None:
            return -C["EBADF"]
        if f.flags & O_ACCMODE == O_RDONLY or length < 0:
            return -C["EINVAL"]
        self._resize(f.ino, length)
        return 0

    def chmod(self, path, mode):
        p = self._canon(path)
        if p is None or p not in self.paths:
            return -C["ENOENT"]
        self.inodes[self.paths[p]].mode = mode & 0o777
        return 0

    def fchmod(self, fd, mode):
        f = self.fds.get(fd)
        if f is None:
            return -C["EBADF"]
        self.inodes[f.ino].mode = mode & 0o777
        return 0

    def rename(self, oldpath, newpath):
        po, pn = self._canon(oldpath), self._canon(newpath)
        if po is None or pn is None or po not in self.paths:
            return -C["ENOENT"]
        if self.inodes[self.paths[po]].isdir:
            return -C["EPERM"]
        err = self._parent_error(pn)
        if err:
            return err
        if pn in self.paths and self.inodes[self.paths[pn]].isdir:
            return -C["EISDIR"]
        if po != pn:
            self.paths[pn] = self.paths.pop(po)
        return 0


FS_EXTERNS = ("open", "close", "read", "pread", "write", "pwrite", "lseek", "unlink", "fstat",
              "lstat", "access", "mkdir", "truncate", "ftruncate", "chmod", "fchmod", "rename")


class FsService(ServiceBinding):
    name = "correct_fs"

    def __init__(self, fs: MemFS = None):
        self.fs = fs or MemFS()
        super().__init__({f"untrusted_os_{n}": getattr(self.fs, n) for n in FS_EXTERNS})


def correct_fs() -> FsService:
    """A fresh, empty in-memory file system binding."""
    return FsService()
