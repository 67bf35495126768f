"""A Porter-style suffix stemmer covering steps 1a-1c plus common step 2-4 suffixes.

Rule subset:

* 1a  sses->ss, ies->i, ss->ss, s->''
* 1b  (m>0) eed->ee; (*v*) ed->'', ing->'' followed by at->ate, bl->ble,
  iz->ize, double consonant->single (except l s z), (m=1 and *o)->+e
* 1c  (*v*) y->i
* 2   (m>0) ational->ate tional->tion enci->ence anci->ance izer->ize
  alli->al entli->ent eli->e ousli->ous ization->ize ation->ate ator->ate
  alism->al iveness->ive fulness->ful ousness->ous aliti->al iviti->ive
  biliti->ble
* 3   (m>0) icate->ic ative->'' alize->al iciti->ic ical->ic ful->'' ness->''
* 4   (m>1) al ance ence er ic able ible ant ement ment ent ion(after s/t)
  ou ism ate iti ous ive ize -> ''

Tokens shorter than three characters and non-alphabetic tokens are returned unchanged.
"""

from __future__ import annotations

from functools import lru_cache

_VOWELS = set("aeiou")

_STEP2 = (("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
          ("izer", "ize"), ("alli", "al"), ("entli", "ent"), ("eli", "e"), ("ousli", "ous"),
          ("ization", "ize"), ("ation", "ate"), ("ator", "ate"), ("alism", "al"),
          ("iveness", "ive"), ("fulness", "ful"), ("ousness", "ous"), ("aliti", "al"),
          ("iviti", "ive"), ("biliti", "ble"))
_STEP3 = (("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"), ("ical", "ic"),
          ("ful", ""), ("ness", ""))
_STEP4 = ("ement", "ment", "able", "ible", "ance", "ence", "ant", "ent", "ism", "ate",
          "iti", "ous", "ive", "ize", "ion", "al", "er", "ic", "ou")


def _is_cons(w, i):
    ch = w[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_cons(w, i - 1)
    return True


def _measure(stem):
    """Number of VC sequences in ``stem``."""
    m, prev_vowel = 0, False
    for i in range(len(stem)):
        cons = _is_cons(stem, i)
        if cons and prev_vowel:
            m += 1
        prev_vowel = not cons
    return m


def _has_vowel(stem):
    return any(not _is_cons(stem, i) for i in range(len(stem)))


def _double_cons(w):
    return len(w) >= 2 and w[-1] == w[-2] and _is_cons(w, len(w) - 1)


def _cvc(w):
    if len(w) < 3:
        return False
    return (_is_cons(w, len(w) - 3) and not _is_cons(w, len(w) - 2)
            and _is_cons(w, len(w) - 1) and w[-1] not in "wxy")


def _replace(w, rules, min_m):
    for suf, rep in rules:
        if w.endswith(suf):
            stem = w[:-len(suf)]
            return stem + rep if _measure(stem) > min_m else w
    return w


@lru_cache(maxsize=65536)
def stem(word):
    w = word.lower()
    if len(w) < 3 or not w.isalpha():
        return w
    # 1a
    if w.endswith("sses"):
        w = w[:-2]
    elif w.endswith("ies"):
        w = w[:-2]
    elif w.endswith("ss"):
        pass
    elif w.endswith("s"):
        w = w[:-1]
    # 1b
    if w.endswith("eed"):
        if _measure(w[:-3]) > 0:
            w = w[:-1]
    else:
        for suf in ("ed", "ing"):
            if w.endswith(suf) and _has_vowel(w[:-len(suf)]):
                w = w[:-len(suf)]
                if w.endswith(("at", "bl", "iz")):
                    w += "e"
                elif _double_cons(w) and w[-1] not in "lsz":
                    w = w[:-1]
                elif _measure(w) == 1 and _cvc(w):
                    w += "e"
                break
    # 1c
    if w.endswith("y") and _has_vowel(w[:-1]):
        w = w[:-1] + "i"
    w = _replace(w, _STEP2, 0)
    w = _replace(w, _STEP3, 0)
    for suf in _STEP4:
        if w.endswith(suf):
            stem_ = w[:-len(suf)]
            if _measure(stem_) > 1 and (suf != "ion" or stem_.endswith(("s", "t"))):
                w = stem_
            break
    return w
