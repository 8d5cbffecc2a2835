from __future__ import annotations

import pytest

from structsql.errors import SqlSyntaxError
from structsql.sqlkit import clause_sets, flatten_view, normalize_sql, parse_fragment, parse_sql


# -- parser -----------------------------------------------------------------


@pytest.mark.parametrize(
    "sql",
    [
        "SELECT 1",
        "SELECT count(*) FROM singer",
        "SELECT DISTINCT name FROM singer WHERE age >= 30",
        "SELECT name FROM singer WHERE country IN ('France', 'Spain')",
        "SELECT name FROM singer WHERE age BETWEEN 20 AND 40",
        "SELECT name FROM singer WHERE name LIKE 'J%' AND age IS NOT NULL",
        "SELECT a.name FROM singer AS a LEFT JOIN concert AS b ON a.singer_id = b.concert_id",
        "SELECT name FROM singer WHERE singer_id NOT IN (SELECT singer_id FROM singer_in_concert)",
        "SELECT country, count(*) FROM singer GROUP BY country HAVING count(*) > 1 ORDER BY count(*) DESC LIMIT 3",
        "SELECT name FROM a UNION SELECT name FROM b INTERSECT SELECT name FROM c",
        "SELECT name FROM singer WHERE age > (SELECT avg(age) FROM singer)",
        "SELECT count(DISTINCT country) FROM singer",
        "SELECT * FROM singer",
        "SELECT T1.* FROM singer AS T1",
        "SELECT name FROM singer WHERE singer_id IN ({sub:4})",
    ],
)
def test_accepts_supported_subset(sql):
    parse_sql(sql)


def test_select_from_diagnostic_position():
    with pytest.raises(SqlSyntaxError) as err:
        parse_sql("SELECT FROM")
    assert err.value.position == 2


@pytest.mark.parametrize(
    "sql",
    [
        "INSERT INTO t VALUES (1)",
        "SELECT name FROM singer WHERE",
        "DROP TABLE singer",
        "SELECT f(x) FROM t",
        "SELECT name FROM singer; SELECT 1",
        "UPDATE singer SET age = 1",
    ],
)
def test_rejects_unsupported(sql):
    with pytest.raises(SqlSyntaxError):
        parse_sql(sql)


def test_fragments_by_kind():
    parse_fragment("count(*)", "aggregate")
    parse_fragment("singer", "from_join")
    parse_fragment("singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.concert_id", "from_join")
    parse_fragment("age > 30 AND country = 'France'", "where")
    parse_fragment("Name NOT IN ({sub:4})", "where")
    parse_fragment("country, year", "group_by")
    parse_fragment("count(*) > 1", "having")
    parse_fragment("ORDER BY count(*) DESC LIMIT 1", "order_by")
    parse_fragment("age DESC", "order_by")
    parse_fragment("5", "limit")
    with pytest.raises(SqlSyntaxError):
        parse_fragment("let us count the singers", "aggregate")
    with pytest.raises(SqlSyntaxError):
        parse_fragment("singer WHERE", "from_join")


# -- normalizer ----------------------------------------------------------------


def test_normalize_canonical_form():
    raw = "select name , age from singer where country = \"France\" and age > 30 ;"
    assert (
        normalize_sql(raw)
        == "SELECT name, age FROM singer WHERE country = 'France' AND age > 30"
    )


def test_normalize_renames_aliases_in_order():
    raw = (
        "SELECT a.name FROM singer AS a JOIN singer_in_concert AS b "
        "ON a.singer_id = b.singer_id"
    )
    assert (
        normalize_sql(raw)
        == "SELECT T1.name FROM singer AS T1 JOIN singer_in_concert AS T2 "
        "ON T1.singer_id = T2.singer_id"
    )


def test_normalize_keeps_unaliased_tables_bare():
    raw = (
        "SELECT sum(Population) FROM country WHERE Name NOT IN "
        "(SELECT T9.Name FROM country AS T9 JOIN countrylanguage AS T8 ON T9.Code = T8.CountryCode)"
    )
    out = normalize_sql(raw)
    assert "FROM country WHERE" in out
    assert "country AS T1" in out and "countrylanguage AS T2" in out


def test_normalize_is_idempotent(corpus30):
    for record in corpus30:
        once = normalize_sql(record["query"])
        assert normalize_sql(once) == once


def test_normalize_emits_explicit_direction():
    assert normalize_sql("SELECT a FROM t ORDER BY a") == "SELECT a FROM t ORDER BY a ASC"


# -- clause sets (exact-match structures) ---------------------------------------


def test_reordered_where_equal():
    a = clause_sets("SELECT name FROM singer WHERE age > 30 AND country = 'France'")
    b = clause_sets("SELECT name FROM singer WHERE country = 'France' AND age > 30")
    assert a == b


def test_qualification_resolves_to_same_item():
    a = clause_sets("SELECT name FROM singer")
    b = clause_sets("SELECT singer.name FROM singer")
    assert a == b


def test_select_order_matters():
    a = clause_sets("SELECT name, age FROM singer")
    b = clause_sets("SELECT age, name FROM singer")
    assert a != b


def test_alias_renaming_invisible_to_comparison():
    a = clause_sets(
        "SELECT T1.name FROM singer AS T1 JOIN singer_in_concert AS T2 "
        "ON T1.singer_id = T2.singer_id WHERE T2.concert_id = 11"
    )
    b = clause_sets(
        "SELECT s.name FROM singer AS s JOIN singer_in_concert AS c "
        "ON c.singer_id = s.singer_id WHERE c.concert_id = 11"
    )
    assert a == b


def test_literal_values_compared_exactly():
    a = clause_sets("SELECT name FROM singer WHERE age > 30")
    b = clause_sets("SELECT name FROM singer WHERE age > 31")
    assert a != b


def test_placeholder_params_compare_equal():
    a = clause_sets("SELECT name FROM singer WHERE age > ?")
    b = clause_sets("SELECT name FROM singer WHERE age > ?")
    assert a == b


# -- flattened views --------------------------------------------------------------


def test_flatten_collects_nested_tables():
    view = flatten_view(
        "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM singer_in_concert)"
    )
    assert view.tables == {"singer", "singer_in_concert"}
    assert view.subquery_shape[1] == (("where", 1),)


def test_flatten_separates_literal_predicates():
    view = flatten_view("SELECT name FROM singer WHERE country = 'France' AND singer_id IN (SELECT singer_id FROM singer_in_concert)")
    assert any("'France'" in p for p in view.where_literal)
    assert any("(sub)" in p for p in view.where_structural)
