#pragma once

#include "hers/promptbank/bank.hpp"

namespace hers::prompts {

// Vocabulary drawn from the curated showcase prompts (data/reference_prompts.jsonl).
inline PromptGrammar default_grammar() {
  PromptGrammar g;
  g.templates["typical_parts"] = {
      "{damage_np} on the {part} of a {color} {vehicle}.",
      "{damaged_part} on a {color} {vehicle}.",
      "{damage_np} across the {part} of a {color} {vehicle}.",
      "{damaged_part} on the {side} side of a {color} {vehicle}.",
  };
  g.templates["scene_narratives"] = {
      "A {color} {vehicle} with {damage_np} on its {part} sits {scene_place} {scene_time}.",
      "The {part} of a {color} {vehicle} shows {damage_np}, {scene_cause} {scene_place}.",
      "A {color} {vehicle} is parked {scene_place} {scene_time}, its {damaged_part} {scene_cause}.",
  };
  g.templates["implausible"] = {
      "A {surreal_adj} {bare_part} {surreal_motion}, its {damage_gerund} despite {surreal_clause}.",
      "A {color} {vehicle} made of {surreal_material}, with {damage_np} {surreal_effect}.",
      "The {part} of a {vehicle} {surreal_transform}, leaving {damage_np} {surreal_effect}.",
  };

  auto& v = g.vocab;
  v["damage_np.dent"] = {"a dent", "a large dent", "a shallow dent", "a deep crease", "a round dent",
                         "a fist-sized dent"};
  v["damage_np.scrape"] = {"scratches", "deep key scratches", "a long scrape", "surface gouges",
                           "scuff marks", "fine hairline scratches"};
  v["damage_np.torn_bumper"] = {"a torn bumper cover", "a ripped bumper skin",
                                "a detached bumper corner", "a sagging bumper", "a split bumper edge"};
  v["damage_np.cracked_paint"] = {"cracked paint", "chipped paint and rust", "peeling paint",
                                  "flaking clear coat", "spiderweb paint cracks", "blistered paint"};
  v["damage_np.broken_light"] = {"a cracked headlight lens", "a shattered taillight",
                                 "a broken fog light", "a smashed indicator lamp",
                                 "a foggy cracked headlight"};

  v["part.dent"] = {"front bumper", "rear bumper", "trunk lid", "hood", "driver-side door",
                    "rear wheel arch", "front-left fender", "roof"};
  v["part.scrape"] = {"rear right door", "passenger side door", "front-left fender", "rear bumper",
                      "side skirt", "driver-side door"};
  v["part.torn_bumper"] = {"front bumper", "rear bumper", "front-right bumper corner",
                           "rear-left bumper corner"};
  v["part.cracked_paint"] = {"hood", "rear bumper", "trunk lid", "front fender", "roof", "tailgate"};
  v["part.broken_light"] = {"front bumper", "front-left corner", "rear-left side", "rear-right side",
                            "front-right corner"};

  v["damaged_part.dent"] = {"dented trunk lid", "dented hood", "dented front-left fender",
                            "dented roof panel", "a dented rear door"};
  v["damaged_part.scrape"] = {"scratched rear door", "scraped side skirt", "scuffed front bumper",
                              "scratched passenger door", "a gouged rear fender"};
  v["damaged_part.torn_bumper"] = {"torn front bumper", "torn rear bumper", "half-detached bumper",
                                   "ripped bumper cover"};
  v["damaged_part.cracked_paint"] = {"cracked hood paint", "peeling roof paint",
                                     "flaking tailgate paint", "chipped door paint"};
  v["damaged_part.broken_light"] = {"a cracked left headlight", "broken taillight",
                                    "shattered fog light", "smashed right headlight",
                                    "missing rearview mirror"};

  v["color"] = {"silver", "white", "black", "red", "blue", "gray", "green", "brown", "yellow",
                "maroon", "dark blue", "beige"};
  v["vehicle"] = {"Toyota Vios sedan", "Honda Civic",     "Nissan Almera",     "Mazda CX-5",
                  "Ford Fiesta",       "Isuzu D-Max pickup", "Toyota Camry",    "BMW 3 Series",
                  "Mitsubishi Mirage", "Honda Jazz",       "Suzuki Swift",      "Toyota Corolla Altis",
                  "Hyundai Elantra",   "Kia Picanto",      "Toyota Revo",       "Ford Ranger",
                  "Mitsubishi Triton", "Hyundai Tucson",   "BMW X1",            "Toyota Yaris",
                  "Nissan Leaf",       "Kia Sorento",      "Toyota Prius",      "Toyota Hilux",
                  "MG ZS",             "Honda Accord"};
  v["side"] = {"left", "right", "driver", "passenger", "rear-left", "front-right"};

  v["scene_place"] = {"beneath a highway overpass",
                      "on a gravel shoulder near a construction zone",
                      "in a tight alley",
                      "beside a broken traffic light",
                      "in a crowded shopping mall parking lot",
                      "on a flooded city street",
                      "in gridlocked city traffic",
                      "under dense tree cover",
                      "beside orange cones at an accident reporting station",
                      "in a foggy mountain pass",
                      "against a glassy storefront",
                      "in a tight parking structure",
                      "near a charging station in a quiet suburb"};
  v["scene_time"] = {"after heavy rain", "at dusk", "in the early morning fog", "at night",
                     "on a rainy evening", "under harsh midday sun", "just after sunrise"};
  v["scene_cause"] = {"suggesting a low-speed collision", "left by a side swipe",
                      "after backing into a metal pole", "from a minor rear-end crash",
                      "caused by a falling branch"};

  v["surreal_adj"] = {"floating", "melting", "translucent", "hovering", "suspended", "glowing",
                      "rubbery", "origami"};
  v["bare_part"] = {"bumper", "side mirror", "headlight", "side door", "hood", "fender",
                    "windshield", "tailgate"};
  v["surreal_motion"] = {"hovers midair", "drifts over a glowing forest floor", "rotates in place",
                         "floats above an endless highway", "stretches like rubber",
                         "spins slowly in zero gravity"};
  v["surreal_clause"] = {"never touching the ground", "a frozen backdrop",
                         "the absence of any impact", "being sealed inside a glass cube",
                         "two suns blazing overhead"};
  v["damage_gerund.cracked_paint"] = {"paint cracking and peeling", "paint forming solid icicles",
                                      "paint flickering between colors"};
  v["damage_gerund.dent"] = {"panels denting inward", "surface caving in slowly",
                             "metal crumpling like paper"};
  v["damage_gerund.scrape"] = {"surface scraping against nothing", "edges scuffed and scratched",
                               "chrome scratched by invisible hands"};
  v["damage_gerund.torn_bumper"] = {"bumper cover tearing like fabric", "bumper skin ripping apart",
                                    "bumper corners peeling away"};
  v["damage_gerund.broken_light"] = {"lens shattering in reverse",
                                     "headlight glass cracking into glowing shards",
                                     "lamp housing splintering into light"};
  v["surreal_material"] = {"smoke", "ice", "stitched-together leather panels", "liquid glass",
                           "colorful pixels", "folded paper"};
  v["surreal_effect"] = {"glowing under starlight", "flickering between colors",
                         "melting onto a shimmering glass road", "floating a meter above the road",
                         "casting two shadows", "bending upward against gravity"};
  v["surreal_transform"] = {"disintegrates into colorful pixels", "folds inward like origami",
                            "twists like rubber", "drips upward into the sky",
                            "dissolves into drifting smoke"};
  return g;
}

}  // namespace hers::prompts
