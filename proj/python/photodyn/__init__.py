"""Photodynamics of single colour centres: rate model, photon simulation,
correlation and fitting, backed by the C++ core."""

try:
    from . import _photodyn
except ImportError:  # in-tree build: the extension sits on PYTHONPATH
    import _photodyn

globals().update({name: getattr(_photodyn, name) for name in dir(_photodyn) if not name.startswith("_")})

__all__ = [name for name in dir(_photodyn) if not name.startswith("_")]
