from pathlib import Path

import pytest
import yaml

from apeval.config import from_dict, load_config, parse_bool_list, with_overrides
from apeval.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]


def _base(**kw):
    raw = {"seed": 1, "corpora": [{"name": "syn", "synthetic": {"n_authors": 3}}],
           "providers": [{"id": "a", "mock": "identity"}, {"id": "b", "mock": "word_reverse"}]}
    raw.update(kw)
    return raw


def test_shipped_configs_load():
    cfg = load_config(ROOT / "configs" / "mock.yaml")
    assert cfg.with_metadata == (True, False) and cfg.detector.mock
    live = load_config(ROOT / "configs" / "live.yaml")
    assert all(p.mock is None for p in live.providers)


def test_defaults_and_hash(tmp_path):
    cfg = from_dict(_base(), tmp_path)
    assert cfg.actor_ids == ("a", "b") and cfg.k == 5 and cfg.lda.K == 10
    assert cfg.cache_dir == tmp_path / ".apeval-cache"
    assert cfg.config_hash == from_dict(_base(), tmp_path).config_hash
    assert cfg.config_hash != from_dict(_base(seed=2), tmp_path).config_hash


@pytest.mark.parametrize("patch", [
    {"seed": "x"},
    {"bogus": 1},
    {"k": 1},
    {"n_cycles": -1},
    {"am_rank": "weird"},
    {"av_probe": "weird"},
    {"with_metadata": []},
    {"actors": ["zzz"]},
    {"judges": {"ao": "a", "am": "a"}},
    {"judges": {"ao": "a", "am": "a", "av": "nope"}},
    {"providers": [{"id": "a", "mock": "identity"}, {"id": "a", "mock": "identity"}]},
    {"providers": [{"id": "live"}]},
    {"corpora": [{"name": "x"}]},
    {"corpora": []},
    {"lda": {"topics": 3}},
])
def test_invalid_configs(patch, tmp_path):
    with pytest.raises(ConfigError):
        from_dict(_base(**patch), tmp_path)


def test_cache_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("APEVAL_CACHE_DIR", str(tmp_path / "elsewhere"))
    assert from_dict(_base(), tmp_path).cache_dir == tmp_path / "elsewhere"


def test_overrides_keep_resolved_paths(tmp_path):
    path = tmp_path / "c.yaml"
    base = _base(corpora=[{"name": "one", "path": "data/one.jsonl"},
                          {"name": "two", "synthetic": {}}])
    path.write_text(yaml.safe_dump(base))
    cfg = load_config(path)
    out = with_overrides(cfg, providers=["b"], dataset="one", cycles=0, with_metadata=[True])
    assert out.actor_ids == ("b",) and out.n_cycles == 0 and out.with_metadata == (True,)
    assert [c.name for c in out.corpora] == ["one"]
    assert out.corpora[0].path == tmp_path / "data" / "one.jsonl"
    assert out.output_dir == cfg.output_dir
    with pytest.raises(ConfigError):
        with_overrides(cfg, dataset="three")
    with pytest.raises(ConfigError):
        with_overrides(cfg, providers=["q"])


def test_bad_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_parse_bool_list():
    assert parse_bool_list("true, false,1,off") == [True, False, True, False]
    with pytest.raises(ConfigError):
        parse_bool_list("maybe")
