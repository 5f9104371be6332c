"""Named integer constants visible to every model (Linux values)."""

ERRNO = {
    "EPERM": 1,
    "ENOENT": 2,
    "EBADF": 9,
    "EAGAIN": 11,
    "EFAULT": 14,
    "EACCES": 13,
    "EBUSY": 16,
    "EEXIST": 17,
    "ENOTDIR": 20,
    "EISDIR": 21,
    "EINVAL": 22,
    "EDEADLK": 35,
    "ENOTEMPTY": 39,
}

OPEN_FLAGS = {
    "O_RDONLY": 0,
    "O_WRONLY": 1,
    "O_RDWR": 2,
    "O_ACCMODE": 3,
    "O_CREAT": 0o100,
    "O_EXCL": 0o200,
    "O_TRUNC": 0o1000,
    "O_APPEND": 0o2000,
}

MISC = {
    "SEEK_SET": 0,
    "SEEK_CUR": 1,
    "SEEK_END": 2,
    "S_IRUSR": 0o400,
    "S_IWUSR": 0o200,
    "S_IXUSR": 0o100,
    "F_OK": 0,
    "X_OK": 1,
    "W_OK": 2,
    "R_OK": 4,
    "MUTEX_NORMAL": 0,
    "MUTEX_ERRCHECK": 1,
    "MUTEX_RECURSIVE": 2,
}

CONSTANTS = {**ERRNO, **OPEN_FLAGS, **MISC}

ERRNO_NAMES = {v: k for k, v in ERRNO.items()}
