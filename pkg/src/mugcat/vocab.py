"""Bundled stub-recognizer vocabulary: 100 common word-level ASL glosses."""

STUB_VOCABULARY = (
    "accident", "afternoon", "all", "apple", "baby",
    "basketball", "bathroom", "because", "bed", "before",
    "bird", "birthday", "black", "blue", "book",
    "bowling", "boy", "bread", "brother", "brown",
    "busy", "but", "buy", "can", "candy",
    "car", "chair", "change", "cheat", "city",
    "clothes", "cold", "color", "computer", "cook",
    "cool", "corn", "cousin", "cow", "dance",
    "dark", "deaf", "decide", "doctor", "dog",
    "drink", "eat", "enjoy", "family", "fine",
    "finish", "fish", "food", "forget", "friend",
    "full", "girl", "give", "go", "graduate",
    "happy", "hat", "hearing", "hello", "help",
    "home", "hot", "house", "how", "jacket",
    "kiss", "language", "last", "later", "letter",
    "like", "man", "many", "medicine", "meet",
    "milk", "mother", "movie", "need", "no",
    "now", "orange", "paint", "paper", "pink",
    "pizza", "play", "read", "red", "right",
    "same", "school", "short", "walk", "woman",
)
