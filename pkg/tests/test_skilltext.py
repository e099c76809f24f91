import sys

import numpy as np
import pytest

from focuspolicy import numerics as nx
from focuspolicy.skilltext import D_TXT, SKILLS, ExternalTextEncoder, SkillVocabulary, get_skill


def test_vocabulary_rows_and_lookup():
    voc = SkillVocabulary(nx.ParamStore(), nx.rng(0, "txt"))
    assert voc.table.shape == (len(SKILLS), D_TXT)
    assert abs(voc.table.data.std() - 0.02) < 0.005
    rows = voc.rows(["tool_push", "cube_out"]).data
    assert np.array_equal(rows[0], voc.table.data[voc.index["tool_push"]])
    assert np.array_equal(voc.embed_description("cube_out").data, rows[1])
    with pytest.raises(KeyError, match="unknown skill"):
        voc.rows(["juggle"])


def test_duplicate_skills_rejected():
    with pytest.raises(ValueError):
        SkillVocabulary(nx.ParamStore(), nx.rng(0), skills=SKILLS[:1] * 2)


def test_descriptions_unique_and_skill_lookup():
    assert len({s.description for s in SKILLS}) == len(SKILLS)
    assert get_skill("sort_cube").relevant[0] == ("cube", "green")
    with pytest.raises(KeyError):
        get_skill("nope")


def test_to_json_round_trip_order():
    voc = SkillVocabulary(nx.ParamStore(), nx.rng(1))
    assert [d["skill_id"] for d in voc.to_json()] == [s.skill_id for s in SKILLS]


ECHO = (
    "import json,sys\n"
    "for line in sys.stdin:\n"
    "    n = len(json.loads(line)['text'])\n"
    "    print(json.dumps({'embedding': [float(n)] * WIDTH}), flush=True)\n"
)


def test_external_encoder_protocol():
    enc = ExternalTextEncoder([sys.executable, "-c", ECHO.replace("WIDTH", str(D_TXT))])
    try:
        vec = enc("abc")
        assert vec.shape == (D_TXT,) and np.all(vec == 3.0)
    finally:
        enc.close()


def test_external_encoder_bad_width():
    enc = ExternalTextEncoder([sys.executable, "-c", ECHO.replace("WIDTH", "3")])
    try:
        with pytest.raises(ValueError, match="bad embedding"):
            enc("abc")
    finally:
        enc.close()
