import pytest
from hypothesis import given, strategies as st

from haff import Kind, aslt_to_code, code_to_aslt, structurally_equal
from haff.aslt import AsltTree
from haff.errors import InvalidTreeError
from haff.gen import random_unit

from helpers import CRASH_CORPUS, ROUNDTRIP_CORPUS


def test_empty_unit_prints_empty():
    assert aslt_to_code(code_to_aslt("")) == ""


def test_doubling_meta_blocks_verbatim():
    src = (CRASH_CORPUS / "doubling.svc").read_text()
    out = aslt_to_code(code_to_aslt(src))
    assert '/*<MISet>\nfailover.VarSetDef("VarSet1",str,i)\nfailover.VarSetDef("VarSet2",i,j,k)\n</MISet>*/' in out
    assert "/*<MISet>\nfailover.Failoverpoint(j,#VarSet1)\n</MISet>*/" in out


def test_canonical_layout():
    out = aslt_to_code(code_to_aslt("method a(x){if(x<1){print(x);}else if(x==2){return;}else{x=3;}}"
                                     "method b(){while(true){fault(\"f\");}}"))
    assert out == (
        "method a(x) {\n"
        "    if (x < 1) {\n"
        "        print(x);\n"
        "    } else if (x == 2) {\n"
        "        return;\n"
        "    } else {\n"
        "        x = 3;\n"
        "    }\n"
        "}\n"
        "\n"
        "method b() {\n"
        "    while (true) {\n"
        '        fault("f");\n'
        "    }\n"
        "}\n"
    )


@pytest.mark.parametrize("expr", [
    "(1 + 2) * 3",
    "1 - (2 - 3)",
    "!(a && b)",
    "-(x + 1)",
    "a || b && c",
    "(a || b) && c",
    "-(5)",
    "10 / (2 * 5) % 3",
])
def test_parentheses_preserve_structure(expr):
    tree = code_to_aslt(f"method m() {{ return {expr}; }}")
    printed = aslt_to_code(tree)
    assert structurally_equal(code_to_aslt(printed), tree)
    assert aslt_to_code(code_to_aslt(printed)) == printed


def test_minimal_parentheses():
    out = aslt_to_code(code_to_aslt("method m() { return ((1 + (2 * 3))); }"))
    assert "return 1 + 2 * 3;" in out


def test_unary_minus_over_literal_keeps_node():
    tree = AsltTree.empty()
    lit = tree.new(Kind.LITERAL, value=5)
    neg = tree.new(Kind.UNARY_OP, [lit], op="-")
    ret = tree.new(Kind.RETURN, [neg])
    body = tree.new(Kind.BLOCK, [ret])
    method = tree.new(Kind.METHOD_DECL, [body], name="m")
    tree.nodes[tree.root].children.append(method)
    printed = aslt_to_code(tree)
    assert "return -(5);" in printed
    assert structurally_equal(code_to_aslt(printed), tree)


def test_invalid_tree_names_node():
    tree = AsltTree.empty()
    bad = tree.new(Kind.ASSIGN, [tree.new(Kind.VAR_REF, name="x")])
    body = tree.new(Kind.BLOCK, [bad])
    tree.nodes[tree.root].children.append(tree.new(Kind.METHOD_DECL, [body], name="m"))
    with pytest.raises(InvalidTreeError) as info:
        aslt_to_code(tree)
    assert info.value.node_id == bad


def test_meta_raw_with_closing_delimiter_rejected():
    tree = code_to_aslt("method m() { /*<MISet>x</MISet>*/ return; }")
    meta = next(n for n in tree.walk() if n.kind is Kind.META_INFO_SET)
    meta.attributes["raw"] = "oops </MISet>*/"
    with pytest.raises(InvalidTreeError):
        aslt_to_code(tree)


def test_committed_corpus_is_canonical():
    files = sorted(ROUNDTRIP_CORPUS.glob("*.svc"))
    assert len(files) >= 50
    for path in files:
        text = path.read_text(encoding="utf-8")
        assert aslt_to_code(code_to_aslt(text)) == text, path.name


@given(st.integers(min_value=0, max_value=10**6))
def test_generated_trees_round_trip(seed):
    tree = random_unit(seed)
    assert structurally_equal(code_to_aslt(aslt_to_code(tree)), tree)
