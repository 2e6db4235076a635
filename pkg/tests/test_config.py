import dataclasses

import pytest

from ddrom import WorkbenchConfig, ConfigError


def test_defaults_validate():
    WorkbenchConfig().validate()


def test_ini_roundtrip(tmp_path):
    cfg = dataclasses.replace(WorkbenchConfig(), nx=42, n_omega=4, learning_rate=5e-4,
                              strong_constraints=True)
    f = tmp_path / "cfg.ini"
    f.write_text(cfg.to_ini())
    assert WorkbenchConfig.from_ini(f) == cfg


def test_partial_file_overrides_only_named_keys(tmp_path):
    f = tmp_path / "cfg.ini"
    f.write_text("[mesh]\nnx = 62\n")
    cfg = WorkbenchConfig.from_ini(f)
    assert cfg.nx == 62
    assert cfg.ny == WorkbenchConfig().ny


def test_unknown_section_and_key_rejected(tmp_path):
    f = tmp_path / "cfg.ini"
    f.write_text("[nonsense]\nfoo = 1\n")
    with pytest.raises(ConfigError, match="unknown config section"):
        WorkbenchConfig.from_ini(f)
    f.write_text("[mesh]\nepochs = 5\n")
    with pytest.raises(ConfigError, match="unknown key"):
        WorkbenchConfig.from_ini(f)


def test_schema_errors_before_any_solve(tmp_path):
    f = tmp_path / "cfg.ini"
    f.write_text("[parameters]\na_min = 100\na_max = 1\n")
    with pytest.raises(ConfigError, match="empty parameter range"):
        WorkbenchConfig.from_ini(f)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError):
        WorkbenchConfig.from_ini(tmp_path / "absent.ini")


def test_validation_catches_bad_values():
    for bad in (dict(nx=2), dict(n_sub_x=0), dict(validation_fraction=1.5),
                dict(epochs=0), dict(n_hr_nodes=0), dict(kkt_tol=0.0),
                dict(n_sub_x=500)):
        with pytest.raises(ConfigError):
            dataclasses.replace(WorkbenchConfig(), **bad).validate()


def test_content_hash_ignores_artifact_root_only():
    base = WorkbenchConfig()
    moved = dataclasses.replace(base, artifact_root="/elsewhere")
    changed = dataclasses.replace(base, seed=99)
    assert base.content_hash() == moved.content_hash()
    assert base.content_hash() != changed.content_hash()
    assert str(base.artifact_dir()).endswith(f"run_{base.content_hash()}")
