import pytest

from cmcgrasp import synth


@pytest.fixture(scope="session")
def small_two_class_dataset(tmp_path_factory):
    """Separable two-class synthetic dataset shared by slower tests."""
    root = tmp_path_factory.mktemp("synth_ds")
    synth.two_class_weight_dataset(root, gamma2_a=0.7, gamma2_b=0.2,
                                   trials_per_class=18,
                                   emg_channels=("BR", "FDI"), seed=77)
    return root


@pytest.fixture(scope="session")
def five_muscle_dataset(tmp_path_factory):
    """Small 5-EMG-channel dataset for sweep structure tests."""
    root = tmp_path_factory.mktemp("synth_ds5")
    synth.two_class_weight_dataset(root, gamma2_a=0.7, gamma2_b=0.15,
                                   trials_per_class=14,
                                   emg_channels=("AD", "BR", "CED", "FD", "FDI"),
                                   seed=99)
    return root
