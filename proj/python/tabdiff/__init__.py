"""Guided tabular diffusion for parametric design generation and completion."""

import json

from ._tabdiff import (
    ConfigError,
    Error,
    ShapeError,
    SpecError,
    _Model,
    _prd,
    _replay,
    _run_command,
    mape,
    mask_from_spec,
    mask_to_spec,
    mmd,
    synthetic_dataset,
    synthetic_performance,
)

__all__ = [
    "ConfigError", "Error", "Model", "ShapeError", "SpecError", "mape", "mask_from_spec",
    "mask_to_spec", "mmd", "prd", "replay", "run", "synthetic_dataset", "synthetic_performance",
]


def run(command, **config):
    """Run a CLI command (train, sample, repaint, eval, experiment, synth); returns its manifest."""
    return json.loads(_run_command(command, json.dumps(config)))


def replay(manifest, out_dir=""):
    return json.loads(_replay(str(manifest), str(out_dir)))


def prd(real, generated, clusters=20, seed=0):
    return json.loads(_prd(real, generated, clusters, seed))


class Model:
    """A trained model directory."""

    def __init__(self, path):
        self._m = _Model.load(str(path))

    @property
    def name(self):
        return self._m.name

    @property
    def dim(self):
        return self._m.dim

    def describe(self):
        return json.loads(self._m._describe())

    def default_target(self):
        return self._m.default_target()

    def default_reference(self):
        return self._m.default_reference()

    def generate(self, target=None, mask="", reference=None, n=16, seed=0, **extra):
        """Same request fields and result payload as POST /api/generate."""
        request = {"condition": self.default_target() if target is None else target,
                   "mask_spec": mask, "n": n, "seed": seed, **extra}
        if reference is not None:
            request["reference"] = list(reference)
        return json.loads(self._m._generate(json.dumps(request)))

    def experiment(self, name, **config):
        return json.loads(self._m._experiment(name, json.dumps(config)))
