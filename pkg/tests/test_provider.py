import math

import pytest

from conftest import make_provider
from pitcrew.provider import (ChatMessage, CompletionRequest, ProviderError,
                              ResponseSchema, SchemaField, SchemaViolation,
                              cosine, hashed_embedding)


def request(text, schema=None):
    return CompletionRequest(messages=(ChatMessage("user", text),),
                             response_schema=schema)


def test_scripted_rule_first_match_wins():
    p = make_provider(rules=[
        {"pattern": "restart", "response": {"skills": ["get_icm"]}},
        {"pattern": "restart the server", "response": {"skills": ["other"]}},
    ])
    schema = ResponseSchema("sel", (SchemaField("skills", "list"),))
    out = p.complete(request("how do I restart the server?", schema))
    assert out == {"skills": ["get_icm"]}


def test_scripted_default_used_when_no_rule_matches():
    p = make_provider(default="fallback text")
    assert p.complete(request("anything")) == "fallback text"


def test_no_rule_and_no_default_is_error():
    p = make_provider(default=None)
    with pytest.raises(ProviderError):
        p.complete(request("anything"))


def test_schema_violation_on_plain_text():
    p = make_provider(default="not a record")
    schema = ResponseSchema("rec", (SchemaField("a", "int"),))
    with pytest.raises(SchemaViolation):
        p.complete(request("x", schema))


def test_schema_violation_on_wrong_field_type():
    p = make_provider(default={"a": "nope"})
    schema = ResponseSchema("rec", (SchemaField("a", "int"),))
    with pytest.raises(SchemaViolation):
        p.complete(request("x", schema))


def test_identical_requests_identical_outputs():
    p = make_provider(default="same")
    r = request("hello")
    assert p.complete(r) == p.complete(r)
    assert p.embed("hello") == p.embed("hello")


def test_empty_text_embedding_rejected():
    p = make_provider()
    with pytest.raises(ValueError):
        p.embed("")


def test_embedding_dimension_constant():
    p = make_provider(dimension=32)
    assert len(p.embed("a")) == len(p.embed("some longer text here")) == 32


def test_hashed_projection_similarity_ordering():
    # Token-permutation pairs share all buckets; unrelated text shares none
    # (verified by direct computation of both cosines with the same hash).
    a = hashed_embedding("restart server", 64, "m")
    b = hashed_embedding("server restart", 64, "m")
    c = hashed_embedding("blue whale", 64, "m")
    assert math.isclose(cosine(a, b), 1.0)
    assert cosine(a, b) > cosine(a, c)


def test_embedding_is_unit_norm():
    v = hashed_embedding("some text with tokens", 64, "m")
    assert math.isclose(math.sqrt(sum(x * x for x in v.values)), 1.0)


def test_messages_must_be_nonempty():
    with pytest.raises(ValueError):
        CompletionRequest(messages=())


def test_invalid_role_rejected():
    with pytest.raises(ValueError):
        ChatMessage("robot", "hi")
