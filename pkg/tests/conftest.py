import pytest

from spatialrank import dataset, mlp, synthgen


@pytest.fixture(scope="session")
def synth_split():
    data = synthgen.generate(synthgen.SynthConfig(n=100, seed=7))
    return dataset.stratified_split(data, 0.8, 7)


@pytest.fixture(scope="session")
def trained_geo(synth_split):
    """The full recipe (100 epochs, batch 12, lr 1e-5) with geometry features."""
    config = mlp.TrainConfig(seed=7, use_geo=True)
    model, history = mlp.train(synth_split.train, config)
    return model, history
