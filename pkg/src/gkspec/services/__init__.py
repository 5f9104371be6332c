"""In-process services that the validator can bind to."""

from .base import ExternResult, ServiceBinding
from .fs import correct_fs
from .sync import correct_sync
from .adversary import VARIANTS, adversary

__all__ = ["ExternResult", "ServiceBinding", "correct_fs", "correct_sync", "adversary", "VARIANTS"]
