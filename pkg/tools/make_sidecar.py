"""Regenerate the annotation sidecar (NER labels and coreference chains) for the bundled corpus."""
from pathlib import Path
import json
def rep(*pairs): return [{"surface": s, "ner": n} for s, n in pairs]
B = rep(("Beyoncé", "PERSON"))
docs = {
 "Beyonce:0": {"sentences": {
   "0": {"ner": ["NONE","DATE","DATE","NONE","PERSON","NONE","NONE","NONE","NUMBER","NONE","NONE","MISC","MISC","MISC","NONE","NONE","NONE","NONE","NONE","MONEY","MONEY","MONEY","NONE","DATE","DATE","NONE","DATE","DATE","NONE"]},
   "1": {"coref": [{"mention": [7, 8], "representative": B}, {"mention": [18, 19], "representative": B}]},
   "2": {"coref": [{"mention": [5, 6], "representative": B}]}}},
 "The_Legend_of_Zelda:_Twilight_Princess:0": {"sentences": {
   "0": {"coref": [{"mention": [10, 11], "representative": rep(("The","NONE"),("character","NONE"),("of","NONE"),("Midna","LOCATION"))}]}}},
 "Kanye_West:0": {"sentences": {
   "0": {"coref": [{"mention": [2, 3], "representative": rep(("West","PERSON"))}, {"mention": [11, 12], "representative": rep(("West","PERSON"))}]},
   "1": {"coref": [{"mention": [9, 10], "representative": rep(("West","PERSON"))}]}}},
 "Frédéric_Chopin:0": {"sentences": {"1": {"coref": [{"mention": [0, 1], "representative": rep(("Frédéric","PERSON"),("Chopin","PERSON"))}]}}},
 "Oxygen:0": {"sentences": {"1": {"coref": [{"mention": [0, 1], "representative": rep(("Oxygen","NONE"))}]}}},
 "Nile:0": {"sentences": {"1": {"coref": [{"mention": [0, 1], "representative": rep(("The","NONE"),("Nile","LOCATION"))}]}}},
 "Queen_Victoria:0": {"sentences": {
   "0": {"coref": [{"mention": [9, 10], "representative": rep(("Queen","TITLE"),("Victoria","PERSON"))}]},
   "1": {"coref": [{"mention": [0, 1], "representative": rep(("Queen","TITLE"),("Victoria","PERSON"))}]}}},
 "Nikola_Tesla:0": {"sentences": {"1": {"coref": [{"mention": [0, 1], "representative": rep(("Nikola","PERSON"),("Tesla","PERSON"))}]}}},
 "Mount_Everest:0": {"sentences": {"1": {"coref": [{"mention": [0, 1], "representative": rep(("Mount","LOCATION"),("Everest","LOCATION"))}]}}},
}
json.dump({"format": "focusqg-annotations", "version": 1, "documents": docs},
          open(Path(__file__).resolve().parent.parent / "src/focusqg/data/qg50.annotations.json", "w", encoding="utf-8"), ensure_ascii=False, indent=1)
