import json

import pytest

from invsde.definition import load_definition, parse_definition
from invsde.errors import DefinitionError
from invsde.synthesis import ITO, STRATONOVICH

SYNTH = {"n": 3, "s": 1, "M": "x1^2+x2^2-cosh(x3)^2",
         "u": {"1,0": "1/5", "1,1": "1/3", "2,1": "1/10"}, "x0": [0, 1, 0], "T": 10}
HAND = {"n": 2, "interpretation": "ito", "drift": ["-x1/2", "-x2/2"],
        "diffusion": [["-x2", "x1"]], "M": "x1^2+x2^2", "x0": [[1, 0], [0, 1]]}


def test_synthesized_definition():
    d = parse_definition(SYNTH, "cat")
    assert d.synthesized and d.name == "cat" and d.s == 1
    assert d.x0 == [[0.0, 1.0, 0.0]]
    assert d.build().n == 3


def test_hand_entered_definition():
    d = parse_definition(HAND)
    assert not d.synthesized and d.s == 1 and d.interpretation == ITO
    assert d.build().interpretation == ITO


def test_dict_roundtrip():
    for doc in (SYNTH, HAND):
        d = parse_definition(doc, "x")
        assert parse_definition(json.loads(d.to_json())) == d


def test_extras_kept():
    d = parse_definition(SYNTH | {"integrator": "milstein", "notes": "hi"})
    assert d.extras == {"integrator": "milstein", "notes": "hi"}
    assert d.to_dict()["notes"] == "hi"


@pytest.mark.parametrize("doc,msg", [
    ({k: v for k, v in SYNTH.items() if k != "u"}, "missing 'u'"),
    (SYNTH | {"drift": ["0", "0", "0"]}, "either"),
    (SYNTH | {"n": 1}, "'n'"),
    (SYNTH | {"colour": 1}, "unknown keys: colour"),
    (SYNTH | {"u": {"1": "1"}}, "j,l"),
    (SYNTH | {"u": {"1,1": "1/"}}, r"u\[1,1\]"),
    (SYNTH | {"M": "x1 +* x2"}, "M"),
    (SYNTH | {"x0": [0, 1]}, r"x0\[0\]"),
    (SYNTH | {"T": 0}, "T > t0"),
    (HAND | {"interpretation": "both"}, "interpretation"),
    (HAND | {"drift": ["0"]}, "'drift'"),
    (HAND | {"diffusion": [["x1"]]}, r"diffusion\[0\]"),
    (HAND | {"s": 2}, "'s'"),
    ({"n": 2}, "missing"),
])
def test_validation(doc, msg):
    with pytest.raises(DefinitionError, match=msg):
        parse_definition(doc)


def test_expression_error_has_offset():
    with pytest.raises(DefinitionError, match=r"drift\[1\].*offset 8"):
        parse_definition(HAND | {"drift": ["0", "x1 + (x2"]})


def test_build_wraps_synthesis_errors():
    with pytest.raises(DefinitionError):
        parse_definition(SYNTH | {"u": {"4,1": "1"}}).build()


def test_load_reports_json_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "n": 2,\n  "M": x\n}')
    with pytest.raises(DefinitionError, match=r"bad.json:3:8"):
        load_definition(p)


def test_load_names_from_stem(tmp_path):
    p = tmp_path / "mysys.json"
    p.write_text(json.dumps(HAND))
    assert load_definition(p).name == "mysys"


def test_missing_file(tmp_path):
    with pytest.raises(DefinitionError):
        load_definition(tmp_path / "nope.json")


def test_default_interpretation():
    assert parse_definition(SYNTH).interpretation == STRATONOVICH
