import os
import random
import re
import xml.etree.ElementTree as ET
from fnmatch import fnmatchcase

import pytest

from conftest import FIXTURES
from sitecheck import xml_subset
from sitecheck.xml_subset import (
    TagUniverse,
    XmlCheckError,
    check_xml_tree,
    collect_tag_paths,
    find_user_files,
    validate_user_file,
)

XML = FIXTURES / "xml"
MAIN = XML / "config" / "main.xml"
NAMES = ["a", "b", "c", "d", "e", "Hydro", "T", "seed", "ns:x"]


# -- independent oracle: ElementTree path sets


def et_paths(path):
    out = set()

    def walk(el, prefix):
        p = prefix + (el.tag,)
        out.add(p)
        for child in el:
            walk(child, p)

    walk(ET.parse(path).getroot(), ())
    return out


def oracle_unknown(user, main):
    return sorted(et_paths(user) - et_paths(main))


def reported_paths(findings):
    return sorted(tuple(re.search(r" at (\S+) is not defined", f.message).group(1).split("/")) for f in findings)


def random_tree(rng, max_elements=100):
    count = rng.randint(1, max_elements)
    root = ET.Element(rng.choice(NAMES[:-1]))
    nodes = [root]
    for _ in range(count - 1):
        parent = rng.choice(nodes)
        child = ET.SubElement(parent, rng.choice(NAMES[:-1]), {"v": str(rng.random())})
        child.text = rng.choice(["", "1", "text & more"])
        nodes.append(child)
    return ET.ElementTree(root)


def write_tree(tree, path):
    ET.indent(tree)
    tree.write(path, encoding="utf-8", xml_declaration=True)
    return path


# -- examples


def test_collect_paths(tmp_path):
    p = tmp_path / "a.xml"
    p.write_text("<a><b/><c><d/></c></a>")
    assert collect_tag_paths(p).paths == {("a",), ("a", "b"), ("a", "c"), ("a", "c", "d")}
    p.write_text("<a><b/><b/></a>")
    assert collect_tag_paths(p).paths == {("a",), ("a", "b")}


def test_empty_file_is_parse_error(tmp_path):
    p = tmp_path / "empty.xml"
    p.write_text("")
    with pytest.raises(XmlCheckError) as exc:
        collect_tag_paths(p)
    assert exc.value.finding.machine_code == "XML_PARSE_ERROR"


def test_identical_file_valid():
    assert validate_user_file(MAIN, collect_tag_paths(MAIN)) == []


def test_leaf_typo():
    (f,) = validate_user_file(XML / "typos" / "user_typo_leaf.xml", collect_tag_paths(MAIN))
    assert f.machine_code == "XML_UNKNOWN_TAG" and f.location.line == 3 and "nEvent" in f.message


def test_parent_typo_reports_each_path_below():
    found = validate_user_file(XML / "typos" / "user_typo_parent.xml", collect_tag_paths(MAIN))
    assert [f.location.line for f in found] == [5, 6, 7, 8]
    assert all("PythiaGn" in f.message for f in found)


def test_wrong_parent_path_vs_name_semantics():
    user = XML / "typos" / "user_wrong_parent.xml"
    path_findings = validate_user_file(user, collect_tag_paths(MAIN))
    names = lambda f: {el.tag for el in ET.parse(f).iter()}  # noqa: E731
    assert names(user) - names(MAIN) == set()
    assert reported_paths(path_findings) == [("jetscape", "Hydro", "MUSIC", "T")]


def test_attributes_and_order_ignored(tmp_path):
    main = tmp_path / "main.xml"
    main.write_text('<r><a x="1"/><b/></r>')
    user = tmp_path / "user.xml"
    user.write_text('<r><b y="2">t</b><a/><a/></r>')
    assert validate_user_file(user, collect_tag_paths(main)) == []


def test_namespace_prefix_literal(tmp_path):
    main = tmp_path / "main.xml"
    main.write_text('<r xmlns:p="urn:p"><p:a/></r>')
    user = tmp_path / "user.xml"
    user.write_text('<r xmlns:q="urn:p"><q:a/></r>')
    (f,) = validate_user_file(user, collect_tag_paths(main))
    assert "q:a" in f.message


def test_malformed_user_file():
    (f,) = validate_user_file(XML / "malformed" / "user_broken.xml", collect_tag_paths(MAIN))
    assert f.machine_code == "XML_PARSE_ERROR" and f.location.line == 5


def test_tree_all_valid():
    r = check_xml_tree(MAIN, XML / "valid")
    assert r.findings == () and r.counts["xml_files"] == 3


def test_tree_one_bad_among_five():
    r = check_xml_tree(MAIN, XML / "mixed")
    assert r.counts["xml_files"] == 5
    assert {f.location.path.rsplit("/", 1)[1] for f in r.findings} == {"user_bad.xml"}


def test_bad_main_raises(tmp_path):
    with pytest.raises(XmlCheckError):
        check_xml_tree(XML / "malformed" / "user_broken.xml", XML / "valid")


def test_main_excluded_from_user_files(tmp_path):
    main = tmp_path / "main_user.xml"
    main.write_text("<r/>")
    assert check_xml_tree(main, tmp_path).counts["xml_files"] == 0


def test_universe_built_once(monkeypatch):
    calls = []
    real = xml_subset.read_tag_paths

    def counting(path):
        calls.append(os.path.basename(path))
        return real(path)

    monkeypatch.setattr(xml_subset, "read_tag_paths", counting)
    check_xml_tree(MAIN, [XML / "valid", XML / "mixed"])
    assert calls.count("main.xml") == 1
    assert len(calls) == 1 + 3 + 5


# -- find_user_files


def test_find_user_files_examples(tmp_path):
    assert find_user_files(tmp_path) == []
    for name in ["examples/user_a.xml", "examples/deep/user_b.xml", "main.xml", "examples/notes.txt"]:
        (tmp_path / name).parent.mkdir(parents=True, exist_ok=True)
        (tmp_path / name).write_text("<r/>")
    found = [p.relative_to(tmp_path).as_posix() for p in find_user_files(tmp_path)]
    assert found == ["examples/deep/user_b.xml", "examples/user_a.xml"]


def test_find_user_files_matches_walk():
    expected = sorted(
        os.path.relpath(os.path.join(d, f), XML).replace(os.sep, "/")
        for d, _, files in os.walk(XML)
        for f in files
        if fnmatchcase(f, "*user*.xml")
    )
    assert [p.relative_to(XML).as_posix() for p in find_user_files(XML)] == expected
    assert len(expected) == 12


# -- properties


def test_fixture_oracle_equivalence():
    universe = collect_tag_paths(MAIN)
    users = [p for p in XML.rglob("*.xml") if "malformed" not in p.parts]
    assert len(users) >= 10
    for user in users:
        assert reported_paths(validate_user_file(user, universe)) == oracle_unknown(user, MAIN), user


def test_reflexivity_random_trees(tmp_path):
    rng = random.Random(7)
    for i in range(50):
        path = write_tree(random_tree(rng), tmp_path / f"t{i}.xml")
        universe = collect_tag_paths(path)
        assert universe.paths == et_paths(path)
        assert universe.is_prefix_closed()
        assert validate_user_file(path, universe) == []


def test_random_pairs_match_oracle(tmp_path):
    rng = random.Random(11)
    for i in range(60):
        main = write_tree(random_tree(rng, 40), tmp_path / f"m{i}.xml")
        user = write_tree(random_tree(rng, 40), tmp_path / f"u{i}.xml")
        assert reported_paths(validate_user_file(user, collect_tag_paths(main))) == oracle_unknown(user, main)


def test_monotonic_under_main_extension(tmp_path):
    rng = random.Random(3)
    for i in range(40):
        main_tree = random_tree(rng, 30)
        user = write_tree(random_tree(rng, 30), tmp_path / f"u{i}.xml")
        before = validate_user_file(user, collect_tag_paths(write_tree(main_tree, tmp_path / f"m{i}.xml")))
        nodes = list(main_tree.iter())
        for _ in range(rng.randint(1, 15)):
            ET.SubElement(rng.choice(nodes), rng.choice(NAMES[:-1]))
        after = validate_user_file(user, collect_tag_paths(write_tree(main_tree, tmp_path / f"m{i}b.xml")))
        assert set(reported_paths(after)) <= set(reported_paths(before))


def test_universe_membership():
    u = TagUniverse(frozenset({("a",), ("a", "b")}), "m")
    assert ["a", "b"] in u and ("a", "c") not in u and len(u) == 2
