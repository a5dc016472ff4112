import pytest

from dlmsgd.config import default_config, load_config, parse_config


def test_parse():
    assert parse_config("a = 1  # note\n\n# skip\nb=two\n") == {"a": "1", "b": "two"}
    with pytest.raises(ValueError, match=":2:"):
        parse_config("a = 1\nbroken\n", "x.cfg")


def test_defaults_and_override(tmp_path):
    d = default_config()
    assert d["stat.preset"] == "9" and d["gen.seed"] == "2020"
    f = tmp_path / "o.cfg"
    f.write_text("stat.preset = 6\n")
    assert load_config(f)["stat.preset"] == "6"
    f.write_text("stat.colour = red\n")
    with pytest.raises(ValueError, match="unknown"):
        load_config(f)
