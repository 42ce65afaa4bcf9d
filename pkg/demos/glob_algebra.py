"""Topic expressions as automata.

Walks through compiling two expressions, intersecting them, and why a
plain two-way fnmatch check is not enough to decide whether they overlap.
"""
from ddsrecon import patterns


def show(label, aut):
    w = aut.witness()
    print(f"{label:<28} states={len(aut.delta):<3} witness={w!r}")


def main():
    a = patterns.compile("foo/*x")
    b = patterns.compile("foo/a*")
    show("foo/*x", a)
    show("foo/a*", b)

    # neither expression matches the other's text...
    print("two_way_match:", patterns.two_way_match("foo/*x", "foo/a*"))
    # ...yet both accept "foo/ax"
    show("foo/*x AND foo/a*", patterns.intersect(a, b))
    show("foo/*x MINUS foo/a*", patterns.difference(a, b))

    secret = patterns.compile("foo/secret*")
    show("foo/* MINUS foo/secret*", patterns.difference("foo/*", secret))
    print("foo/secret1 in difference:",
          patterns.difference("foo/*", secret).accepts("foo/secret1"))


if __name__ == "__main__":
    main()
