#!/usr/bin/env python3
"""Generate the bundled sample recipe corpus (data/sample_corpus.jsonl).

The corpus is synthetic but shaped like a small slice of a recipe knowledge
graph: every record carries a title, canonical ingredient names, ordered
cooking steps, a nutrient map and a tag set. Output is deterministic for a
given --seed.
"""

import argparse
import json
import math
import random

# Tag -> (recipe count, ingredient pool). Counts sum to > 500.
TAGS = {
    "lactose": (35, [
        "milk", "butter", "heavy cream", "cheddar cheese", "sour cream",
        "parmesan cheese", "cream cheese", "yogurt", "flour", "sugar",
        "eggs", "salt", "vanilla extract", "baking powder"]),
    "vegan": (45, [
        "tofu", "chickpeas", "olive oil", "garlic", "onion", "spinach",
        "tomatoes", "coconut milk", "lentils", "brown rice", "ginger",
        "soy sauce", "lemon juice", "cumin"]),
    "vegetarian": (65, [
        "margarine", "frozen peas", "shredded cheddar cheese", "baking soda",
        "vinegar", "eggs", "flour", "potatoes", "mushrooms", "bell pepper",
        "onion", "milk", "cracked wheat", "chili pepper", "fresh pepper"]),
    "dairy-free": (7, [
        "almond milk", "olive oil", "garlic", "chicken breast", "carrots",
        "celery", "onion", "salt", "black pepper"]),
    "gluten-free": (35, [
        "rice flour", "corn tortillas", "quinoa", "chicken thighs",
        "black beans", "avocado", "lime juice", "cilantro", "salt", "corn",
        "tomatoes", "jalapeno", "cumin", "onion"]),
    "nut-free": (18, [
        "sunflower seeds", "oats", "honey", "raisins", "cinnamon", "butter",
        "brown sugar", "eggs", "flour", "salt", "baking soda",
        "vanilla extract"]),
    "egg-free": (30, [
        "flour", "sugar", "cocoa powder", "baking soda", "vegetable oil",
        "vinegar", "vanilla extract", "salt", "water", "brown sugar",
        "cinnamon", "applesauce"]),
    "low-carb": (60, [
        "steak", "bacon", "eggs", "butter", "cauliflower", "zucchini",
        "heavy cream", "parmesan cheese", "garlic", "spinach", "olive oil",
        "salt", "black pepper", "mushrooms"]),
    "low-fat": (50, [
        "skinless chicken breast", "nonfat yogurt", "broccoli", "carrots",
        "brown rice", "lemon juice", "garlic", "onion", "chicken broth",
        "green beans", "tomatoes", "black pepper", "oregano", "egg whites"]),
    "low-sodium": (70, [
        "fresh ground black pepper", "plain yogurt", "all-purpose flour",
        "fresh lemon juice", "apples", "garam masala", "wheat", "olive oil",
        "garlic", "fresh parsley", "green onions", "red onions", "cinnamon",
        "sugar"]),
    "low-cholesterol": (60, [
        "oats", "skim milk", "bananas", "walnuts", "olive oil", "salmon",
        "spinach", "quinoa", "blueberries", "honey", "almonds",
        "lemon juice", "garlic", "kale"]),
    "low-protein": (60, [
        "baking soda", "tomato paste", "green onions", "ground cinnamon",
        "flour", "orange slice", "sweet rice flour", "yellow cake mix",
        "sugar", "butter", "bananas", "sweet potatoes", "apricots", "pecans"]),
    "high-protein": (35, [
        "chicken breast", "ground beef", "eggs", "greek yogurt",
        "cottage cheese", "tuna", "lentils", "black beans", "turkey",
        "quinoa", "salmon", "garlic", "onion", "olive oil"]),
    "high-calcium": (30, [
        "milk", "cheddar cheese", "yogurt", "kale", "broccoli", "sardines",
        "tofu", "almonds", "ricotta cheese", "spinach", "parmesan cheese",
        "white beans", "sesame seeds", "salt"]),
    "high-fiber": (15, [
        "black beans", "lentils", "chickpeas", "oats", "whole wheat flour",
        "bran", "flaxseed", "raspberries", "pears", "broccoli", "split peas",
        "barley", "artichokes", "onion"]),
}

# Extra non-benchmark tags; they never share ingredient vocabularies.
EXTRA_TAGS = ["easy", "dessert", "main-dish", "side-dish", "american",
              "weeknight", "holiday", "breakfast"]

# Per-tag multipliers on the nutrient profile.
PROFILE = {
    "low-fat": {"total_fat": 0.3, "saturated_fat": 0.3},
    "low-carb": {"carbohydrates": 0.25, "sugar": 0.3},
    "low-sodium": {"sodium": 0.2, "salt_per_100g": 0.2},
    "low-cholesterol": {"cholesterol": 0.2},
    "low-protein": {"protein": 0.3},
    "high-protein": {"protein": 2.5},
    "high-fiber": {"fiber": 3.0},
    "high-calcium": {"protein": 1.3},
    "lactose": {"saturated_fat": 1.6},
    "vegan": {"cholesterol": 0.05},
}

ADJECTIVES = ["Easy", "Classic", "Spicy", "Creamy", "Rustic", "Quick",
              "Hearty", "Zesty", "Golden", "Simple", "Savory", "Sunday",
              "Country", "Crispy", "Smoky", "Fresh", "Baked", "Homestyle"]
OWNERS = ["Aunt Peg's", "Grandma's", "Mom's", "Uncle Joe's", "Nana's",
          "Chef Lou's"]
DISHES = ["Casserole", "Salad", "Stew", "Soup", "Bread", "Muffins", "Bake",
          "Skillet", "Bowl", "Pie", "Cookies", "Pancakes", "Curry", "Tart",
          "Stir Fry", "Wraps", "Cake", "Pilaf", "Frittata", "Gratin"]

STEPS = [
    "Preheat the oven to {temp} degrees.",
    "Combine the {a} and {b} in a large bowl.",
    "Stir in the {c} until well mixed.",
    "Heat the {a} in a skillet over medium heat.",
    "Add the {b} and cook for {mins} minutes.",
    "Fold in the {c} gently.",
    "Transfer to a baking dish and bake for {mins} minutes.",
    "Simmer uncovered for {mins} minutes, stirring occasionally.",
    "Season to taste and serve warm.",
    "Let cool for 10 minutes before slicing.",
]

BASE = {
    "calories": 320.0, "protein": 12.0, "sugar": 10.0, "fiber": 2.7,
    "carbohydrates": 30.0, "sodium": 0.44, "cholesterol": 0.05,
    "saturated_fat": 5.6, "total_fat": 15.0, "salt_per_100g": 0.2,
    "sugars_per_100g": 4.0,
}


def lognormal(rng, mean, spread=0.55):
    # Lognormal with the requested mean.
    mu = math.log(mean) - spread * spread / 2.0
    return rng.lognormvariate(mu, spread)


def nutrition(rng, tag):
    scale = PROFILE.get(tag, {})
    out = {}
    for name, mean in BASE.items():
        value = lognormal(rng, mean * scale.get(name, 1.0))
        if rng.random() < 0.03:
            value = 0.0
        out[name] = round(value, 2)
    out["fat_calories"] = round(out["total_fat"] * 9.0, 2)
    return out


def title_for(rng, ingredients, used):
    for _ in range(1000):
        key = rng.choice(ingredients).title()
        parts = []
        if rng.random() < 0.15:
            parts.append(rng.choice(OWNERS))
        else:
            parts.append(rng.choice(ADJECTIVES))
        parts.append(key)
        parts.append(rng.choice(DISHES))
        if rng.random() < 0.2:
            parts.append("With " + rng.choice(ingredients).title())
        title = " ".join(parts)
        if title.lower() not in used:
            used.add(title.lower())
            return title
    raise RuntimeError("could not find a unique title")


def steps_for(rng, ingredients):
    count = rng.randint(3, 6)
    picks = rng.sample(STEPS, count)
    out = []
    for step in picks:
        a, b, c = (rng.choice(ingredients) for _ in range(3))
        out.append(step.format(a=a, b=b, c=c, temp=rng.choice([325, 350, 375, 400]),
                               mins=rng.choice([10, 15, 20, 25, 30, 45])))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--out", default="data/sample_corpus.jsonl")
    args = parser.parse_args()

    rng = random.Random(args.seed)
    used_titles = set()
    records = []
    for tag, (count, pool) in TAGS.items():
        for _ in range(count):
            size = rng.randint(5, min(8, len(pool) - 1))
            ingredients = rng.sample(pool, size)
            tags = [tag]
            if rng.random() < 0.6:
                tags.append(rng.choice(EXTRA_TAGS))
            records.append({
                "title": title_for(rng, ingredients, used_titles),
                "ingredients": ingredients,
                "instructions": steps_for(rng, ingredients),
                "nutrition": nutrition(rng, tag),
                "tags": tags,
            })
    rng.shuffle(records)
    with open(args.out, "w", encoding="utf-8") as fh:
        for i, rec in enumerate(records, 1):
            rec = {"id": f"r{i:04d}", **rec}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
