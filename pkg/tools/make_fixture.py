"""Regenerate the bundled 50-question corpus (SQuAD layout)."""
from pathlib import Path
import json
P = [
 ("Beyonce", "In June 2014, Beyoncé ranked at #1 on the Forbes Celebrity 100 list, earning an estimated $115 million throughout June 2013 – June 2014. This in turn was the first time she had topped the Celebrity 100 list as well as being her highest yearly earnings to date. As of May 2015, her net worth is estimated to be $250 million.",
  [("When did Beyoncé rank at number one on the Forbes Celebrity 100 list?", "June 2014", 0),
   ("How much did Beyoncé earn from June 2013 to June 2014?", "$115 million", 0),
   ("What list did Beyoncé top in June 2014?", "Forbes Celebrity 100", 0),
   ("What is Beyoncé's net worth in 2015?", "$250 million", 0),
   ("As of when was Beyoncé's net worth estimated to be $250 million?", "May 2015", 0)]),
 ("The_Legend_of_Zelda:_Twilight_Princess", "The character of Midna has the most voice acting -- her on-screen dialog is often accompanied by a babble of pseudo-speech, which was produced by scrambling the phonemes of English phrases [better source needed] sampled by Japanese voice actress Akiko Komoto.",
  [("Which character has the most voice acting?", "Midna", 0),
   ("Who provided the basis for Midna's voice?", "Akiko Komoto", 0),
   ("What nationality is Akiko Komoto?", "Japanese", 0),
   ("What was scrambled to produce Midna's pseudo-speech?", "the phonemes of English phrases", 0)]),
 ("Kanye_West", "West got his big break in the year 2000, when he began to produce for artists on Roc-A-Fella Records. At the age of 10, West moved with his mother to Nanjing, China, where she was teaching at Nanjing University as part of an exchange program.",
  [("When did West get his big break?", "2000", 0),
   ("What label did West produce for in 2000?", "Roc-A-Fella Records", 0),
   ("At what age did West move to Nanjing?", "10", 0),
   ("Where did West move with his mother?", "Nanjing, China", 0),
   ("Where was West's mother teaching?", "Nanjing University", 0)]),
 ("The_Legend_of_Zelda:_Twilight_Princess", "A high-definition remaster of the game, The Legend of Zelda: Twilight Princess HD, is being developed by Tantalus Media for the Wii U console. Both six- and seven-track versions of the game's soundtrack were released on November 19, 2006, as part of a Nintendo Power promotion.",
  [("Who developed The Legend of Zelda: Twilight Princess HD?", "Tantalus Media", 0),
   ("What console is the remaster being developed for?", "Wii U", 0),
   ("When was the soundtrack released?", "November 19, 2006", 0),
   ("The soundtrack was released as part of what promotion?", "Nintendo Power", 0)]),
 ("Frédéric_Chopin", "Frédéric Chopin was born in Żelazowa Wola in 1810. He moved to Paris in 1831 at the age of 20. Chopin wrote 21 nocturnes for solo piano.",
  [("Where was Chopin born?", "Żelazowa Wola", 0),
   ("In what year was Chopin born?", "1810", 0),
   ("When did Chopin move to Paris?", "1831", 0),
   ("Where did Chopin move in 1831?", "Paris", 0),
   ("How many nocturnes did Chopin write?", "21", 0)]),
 ("University_of_Notre_Dame", "The University of Notre Dame was founded in 1842 by Father Edward Sorin. The main building is topped by a golden dome with a statue of the Virgin Mary.",
  [("When was the University of Notre Dame founded?", "1842", 0),
   ("Who founded the University of Notre Dame?", "Father Edward Sorin", 0),
   ("What sits on top of the main building?", "a golden dome", 0),
   ("Whose statue is on the golden dome?", "the Virgin Mary", 0)]),
 ("Amazon_rainforest", "The Amazon rainforest covers 5,500,000 square kilometres of land. The majority of the forest is contained within Brazil, with 60% of the rainforest.",
  [("How many square kilometres does the Amazon rainforest cover?", "5,500,000", 0),
   ("Which country contains the majority of the forest?", "Brazil", 0),
   ("What percentage of the rainforest is in Brazil?", "60%", 0)]),
 ("Apollo_program", "The Apollo program was carried out by NASA from 1961 to 1972. Apollo 11 landed the first humans on the Moon in July 1969. Neil Armstrong was the first person to walk on the lunar surface.",
  [("Which agency carried out the Apollo program?", "NASA", 0),
   ("When did the Apollo program begin?", "1961", 0),
   ("When did Apollo 11 land on the Moon?", "July 1969", 0),
   ("Which mission landed the first humans on the Moon?", "Apollo 11", 0),
   ("Who was the first person to walk on the lunar surface?", "Neil Armstrong", 0)]),
 ("Oxygen", "Oxygen is a chemical element with symbol O and atomic number 8. It was discovered by Carl Wilhelm Scheele in Uppsala in 1773.",
  [("What is the atomic number of oxygen?", "8", 0),
   ("Who discovered oxygen?", "Carl Wilhelm Scheele", 0),
   ("Where was oxygen discovered?", "Uppsala", 0),
   ("When was oxygen discovered?", "1773", 0)]),
 ("Nile", "The Nile is a major north-flowing river in Africa. It is 6,650 km long and flows through eleven countries.",
  [("On which continent is the Nile?", "Africa", 0),
   ("How long is the Nile?", "6,650 km", 0),
   ("How many countries does the Nile flow through?", "eleven", 0)]),
 ("Queen_Victoria", "Queen Victoria ruled the United Kingdom from 1837 until her death in 1901. Her reign of 63 years was longer than that of any previous British monarch.",
  [("Who ruled the United Kingdom from 1837?", "Queen Victoria", 0),
   ("When did Queen Victoria die?", "1901", 0),
   ("How long was Victoria's reign?", "63 years", 0)]),
 ("Nikola_Tesla", "Nikola Tesla moved to New York in 1884 to work for Thomas Edison. He later developed the alternating current induction motor.",
  [("When did Tesla move to New York?", "1884", 0),
   ("Who did Tesla work for in New York?", "Thomas Edison", 0),
   ("What motor did Tesla develop?", "the alternating current induction motor", 0)]),
 ("Mount_Everest", "Mount Everest is the highest mountain above sea level, at 8,849 metres. It was first climbed in 1953 by Edmund Hillary and Tenzing Norgay.",
  [("How tall is Mount Everest?", "8,849 metres", 0),
   ("Who first climbed Mount Everest?", "Edmund Hillary and Tenzing Norgay", 0)]),
]
articles = {}
n = 0
for title, ctx, qas in P:
    art = articles.setdefault(title, {"title": title, "paragraphs": []})
    items = []
    for q, a, occ in qas:
        start = -1
        for _ in range(occ + 1):
            start = ctx.index(a, start + 1)
        assert ctx[start:start + len(a)] == a
        items.append({"id": f"qg50-{n:03d}", "question": q, "answers": [{"text": a, "answer_start": start}]})
        n += 1
    art["paragraphs"].append({"context": ctx, "qas": items})
print(n)
json.dump({"version": "qg50-1", "data": list(articles.values())}, open(Path(__file__).resolve().parent.parent / "src/focusqg/data/qg50.json", "w", encoding="utf-8"), ensure_ascii=False, indent=1)
