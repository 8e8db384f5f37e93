# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled unification kernel; mirrors labelflow._kernel_py exactly.

Same term representation (the frozen dataclasses from labelflow.terms), same
trail discipline. Kept in lockstep with the pure version; the test suite
runs the parity checks whenever this module built.
"""

from labelflow.terms import Atom, Compound, Int, Str, Var

IMPLEMENTATION = "cython"


def walk(t, dict bindings):
    while type(t) is Var:
        nxt = bindings.get(t.name)
        if nxt is None:
            return t
        t = nxt
    return t


def bind(str name, value, dict bindings, list trail):
    bindings[name] = value
    trail.append(name)


def undo_to(dict bindings, list trail, Py_ssize_t mark):
    while len(trail) > mark:
        del bindings[trail.pop()]


def unify_inplace(a, b, dict bindings, list trail):
    cdef list stack = [(a, b)]
    cdef Py_ssize_t n, i
    while stack:
        x, y = stack.pop()
        x = walk(x, bindings)
        y = walk(y, bindings)
        if x is y:
            continue
        tx = type(x)
        ty = type(y)
        if tx is Var:
            if ty is Var and x.name == y.name:
                continue
            bindings[x.name] = y
            trail.append(x.name)
            continue
        if ty is Var:
            bindings[y.name] = x
            trail.append(y.name)
            continue
        if tx is not ty:
            return False
        if tx is Atom:
            if x.name != y.name:
                return False
        elif tx is Int or tx is Str:
            if x.value != y.value:
                return False
        else:
            xargs = x.args
            yargs = y.args
            n = len(xargs)
            if x.functor != y.functor or n != len(yargs):
                return False
            for i in range(n):
                stack.append((xargs[i], yargs[i]))
    return True


def unify(a, b, bindings=None):
    cdef dict new = dict(bindings) if bindings else {}
    cdef list trail = []
    if unify_inplace(a, b, new, trail):
        return new
    return None


def resolve(t, dict bindings):
    t = walk(t, bindings)
    if type(t) is Compound:
        args = tuple([resolve(a, bindings) for a in t.args])
        return Compound(t.functor, args)
    return t


def is_ground(t):
    cdef list stack = [t]
    while stack:
        x = stack.pop()
        tx = type(x)
        if tx is Var:
            return False
        if tx is Compound:
            stack.extend(x.args)
    return True


def rename(t, str suffix):
    tx = type(t)
    if tx is Var:
        return Var(t.name + suffix)
    if tx is Compound:
        return Compound(t.functor, tuple([rename(a, suffix) for a in t.args]))
    return t
