"""Single place where jax is configured; every module imports jnp from here."""
import os

import jax

jax.config.update("jax_enable_x64", True)
jax.config.update("jax_platforms", "cpu")

# compiled kernels are reused across processes; FINSLERCOMP_JAX_CACHE="" disables
_cache = os.environ.get("FINSLERCOMP_JAX_CACHE", os.path.join(os.path.expanduser("~"), ".cache", "finslercomp-jax"))
if _cache:
    jax.config.update("jax_compilation_cache_dir", _cache)
    jax.config.update("jax_persistent_cache_min_compile_time_secs", 0.5)

import jax.numpy as jnp  # noqa: E402

__all__ = ["jax", "jnp"]
