#include "kgf/kg/templates.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace kgf::kg {
namespace {

RelationTemplates entry(std::string relation, std::vector<std::string> qa,
                        std::vector<std::string> fb, std::string inverse_qa,
                        std::string inverse_fb, std::string phrase,
                        std::string inverse_phrase = "") {
  return RelationTemplates{std::move(relation), std::move(qa),        std::move(fb),
                           std::move(inverse_qa), std::move(inverse_fb), std::move(phrase),
                           std::move(inverse_phrase)};
}

std::vector<RelationTemplates> builtin_entries() {
  return {
      entry("capital_of",
            {"What is the capital of {h}?", "Which city is the capital of {h}?",
             "What city serves as the capital of {h}?",
             "Where is the seat of government of {h}?"},
            {"The capital of {h} is [BLANK]", "The capital city of {h} is [BLANK]",
             "{h} has its capital in [BLANK]", "The seat of government of {h} is [BLANK]"},
            "Which country has {t} as its capital?", "{t} is the capital of [BLANK]",
            "the capital of {x}", "the country whose capital is {x}"),
      entry("city_country",
            {"In which country is {h} located?", "Which country is {h} in?",
             "What country contains the city of {h}?", "The city of {h} lies in which country?"},
            {"{h} is located in the country of [BLANK]", "The city of {h} lies in [BLANK]",
             "{h} is a city in [BLANK]", "The country containing {h} is [BLANK]"},
            "Which city is located in {t}?", "A city located in {t} is [BLANK]",
            "the country containing {x}", "a city in {x}"),
      entry("citizenship",
            {"What is the country of citizenship of {h}?", "Which country is {h} a citizen of?",
             "What nationality does {h} hold?", "Of which country is {h} a citizen?"},
            {"{h} is a citizen of [BLANK]", "The country of citizenship of {h} is [BLANK]",
             "{h} holds citizenship of [BLANK]", "The nationality of {h} belongs to [BLANK]"},
            "Who is a citizen of {t}?", "A citizen of {t} is [BLANK]",
            "the country of citizenship of {x}", "a citizen of {x}"),
      entry("educated_at",
            {"Where was {h} educated?", "Which university did {h} attend?",
             "At which university did {h} study?", "What university educated {h}?"},
            {"{h} was educated at [BLANK]", "{h} studied at [BLANK]",
             "The university attended by {h} is [BLANK]", "{h} graduated from [BLANK]"},
            "Who was educated at {t}?", "A graduate of {t} is [BLANK]",
            "the university attended by {x}", "a graduate of {x}"),
      entry("university_country",
            {"In which country is the university {h}?", "Which country hosts the university {h}?",
             "Where is the university {h} located?", "What country is the university {h} based in?"},
            {"The university {h} is located in [BLANK]", "{h} is a university in [BLANK]",
             "The country hosting the university {h} is [BLANK]",
             "The university {h} is based in [BLANK]"},
            "Which university is located in {t}?", "A university located in {t} is [BLANK]",
            "the country hosting {x}", "a university in {x}"),
      entry("person_language",
            {"What language does {h} speak?", "Which language is spoken by {h}?",
             "What is the native language of {h}?", "In which language does {h} communicate?"},
            {"{h} speaks [BLANK]", "The language spoken by {h} is [BLANK]",
             "The native language of {h} is [BLANK]", "{h} communicates in [BLANK]"},
            "Who speaks {t}?", "A speaker of {t} is [BLANK]",
            "the language spoken by {x}", "a speaker of {x}"),
      entry("official_language",
            {"What is the official language of {h}?", "Which language is official in {h}?",
             "What language do the authorities of {h} use?",
             "Which language has official status in {h}?"},
            {"The official language of {h} is [BLANK]", "{h} has the official language [BLANK]",
             "The language with official status in {h} is [BLANK]",
             "In {h} the official language is [BLANK]"},
            "Which country has {t} as its official language?",
            "{t} is the official language of [BLANK]", "the official language of {x}",
            "a country whose official language is {x}"),
      entry("director",
            {"Who directed {h}?", "Who is the director of {h}?",
             "Which person directed the film {h}?", "Who was the director behind {h}?"},
            {"{h} was directed by [BLANK]", "The director of {h} is [BLANK]",
             "The film {h} was directed by [BLANK]", "The person who directed {h} is [BLANK]"},
            "Which film was directed by {t}?", "{t} directed the film [BLANK]",
            "the director of {x}", "a film directed by {x}"),
      entry("producer",
            {"Who produced {h}?", "Who is the producer of {h}?",
             "Which person produced the film {h}?", "Who was the producer behind {h}?"},
            {"{h} was produced by [BLANK]", "The producer of {h} is [BLANK]",
             "The film {h} was produced by [BLANK]", "The person who produced {h} is [BLANK]"},
            "Which film was produced by {t}?", "{t} produced the film [BLANK]",
            "the producer of {x}", "a film produced by {x}"),
      entry("performer",
            {"Who performed {h}?", "Who is the performer of {h}?",
             "Which artist performed the work {h}?", "Who was the performer of the work {h}?"},
            {"{h} was performed by [BLANK]", "The performer of {h} is [BLANK]",
             "The work {h} was performed by [BLANK]", "The artist who performed {h} is [BLANK]"},
            "Which work was performed by {t}?", "{t} performed the work [BLANK]",
            "the performer of {x}", "a work performed by {x}"),
      entry("hq_location",
            {"Where is {h} headquartered?", "In which city is the headquarters of {h}?",
             "What city hosts the headquarters of {h}?",
             "Where are the headquarters of {h} located?"},
            {"{h} is headquartered in [BLANK]", "The headquarters of {h} are in [BLANK]",
             "The city hosting the headquarters of {h} is [BLANK]",
             "{h} has its headquarters in [BLANK]"},
            "Which organization is headquartered in {t}?",
            "The organization headquartered in {t} is [BLANK]",
            "the headquarters city of {x}", "an organization headquartered in {x}"),
      entry("country_of_origin",
            {"What is the country of origin of {h}?", "Which country produced the film {h}?",
             "In which country was {h} made?", "Where does the film {h} come from?"},
            {"The country of origin of {h} is [BLANK]", "{h} was made in [BLANK]",
             "The film {h} comes from [BLANK]", "{h} originates from [BLANK]"},
            "Which film originates from {t}?", "A film made in {t} is [BLANK]",
            "the country of origin of {x}", "a film made in {x}"),
      entry("occupation",
            {"What is the occupation of {h}?", "What does {h} do for a living?",
             "What profession does {h} practice?", "Which occupation does {h} have?"},
            {"The occupation of {h} is [BLANK]", "{h} works as a [BLANK]",
             "By profession {h} is a [BLANK]", "{h} earns a living as a [BLANK]"},
            "Who works as a {t}?", "A person working as a {t} is [BLANK]",
            "the occupation of {x}", "a person working as a {x}"),
      entry("award",
            {"Which award did {h} receive?", "What prize was given to {h}?",
             "What award has {h} won?", "Which honor was awarded to {h}?"},
            {"{h} received the award [BLANK]", "The prize given to {h} is [BLANK]",
             "{h} won the award [BLANK]", "The honor awarded to {h} is [BLANK]"},
            "Who received the award {t}?", "The award {t} was given to [BLANK]",
            "the award received by {x}", "a winner of {x}"),
      entry("employer",
            {"Who employs {h}?", "Which organization does {h} work for?",
             "What is the employer of {h}?", "For which organization does {h} work?"},
            {"{h} is employed by [BLANK]", "The employer of {h} is [BLANK]",
             "{h} works for [BLANK]", "The organization employing {h} is [BLANK]"},
            "Who is employed by {t}?", "An employee of {t} is [BLANK]",
            "the employer of {x}", "an employee of {x}"),
      entry("birth_place",
            {"Where was {h} born?", "In which city was {h} born?",
             "What is the birthplace of {h}?", "Which city is the birthplace of {h}?"},
            {"{h} was born in [BLANK]", "The birthplace of {h} is [BLANK]",
             "The city where {h} was born is [BLANK]", "{h} came into the world in [BLANK]"},
            "Who was born in {t}?", "A person born in {t} is [BLANK]",
            "the birthplace of {x}", "a person born in {x}"),
      entry("notable_work",
            {"What is the notable work of {h}?", "Which work is {h} known for?",
             "What work made {h} famous?", "For which work is {h} best known?"},
            {"The notable work of {h} is [BLANK]", "{h} is known for the work [BLANK]",
             "The work that made {h} famous is [BLANK]", "{h} is best known for [BLANK]"},
            "Whose notable work is {t}?", "The work {t} is the notable work of [BLANK]",
            "the notable work of {x}", "the author of {x}"),
      entry("industry",
            {"In which industry does {h} operate?", "What industry is {h} part of?",
             "What sector does {h} work in?", "Which industry does {h} belong to?"},
            {"{h} operates in the industry [BLANK]", "The industry of {h} is [BLANK]",
             "{h} works in the sector [BLANK]", "{h} belongs to the industry [BLANK]"},
            "Which organization operates in {t}?", "An organization in the industry {t} is [BLANK]",
            "the industry of {x}", "an organization in {x}"),
      entry("founded_by",
            {"Who founded {h}?", "Who is the founder of {h}?",
             "Which person founded the organization {h}?", "By whom was {h} founded?"},
            {"{h} was founded by [BLANK]", "The founder of {h} is [BLANK]",
             "The organization {h} was founded by [BLANK]", "The person who founded {h} is [BLANK]"},
            "Which organization was founded by {t}?", "{t} founded the organization [BLANK]",
            "the founder of {x}", "an organization founded by {x}"),
      entry("genre",
            {"What is the genre of {h}?", "Which genre does the film {h} belong to?",
             "What kind of film is {h}?", "In which genre is the film {h}?"},
            {"The genre of {h} is [BLANK]", "The film {h} belongs to the genre [BLANK]",
             "{h} is a film of the genre [BLANK]", "The film {h} is classified as [BLANK]"},
            "Which film belongs to the genre {t}?", "A film of the genre {t} is [BLANK]",
            "the genre of {x}", "a film of the genre {x}"),
      entry("composer",
            {"Who composed the music for {h}?", "Who is the composer of {h}?",
             "Which person wrote the score of {h}?", "Who wrote the music of the film {h}?"},
            {"The music for {h} was composed by [BLANK]", "The composer of {h} is [BLANK]",
             "The score of {h} was written by [BLANK]",
             "The person who composed the music for {h} is [BLANK]"},
            "Which film has music composed by {t}?", "{t} composed the music for [BLANK]",
            "the composer of {x}", "a film scored by {x}"),
      entry("film_language",
            {"In which language was {h} filmed?", "What is the original language of {h}?",
             "Which language is spoken in the film {h}?", "What language is the film {h} in?"},
            {"{h} was filmed in [BLANK]", "The original language of {h} is [BLANK]",
             "The language spoken in the film {h} is [BLANK]", "The film {h} is in [BLANK]"},
            "Which film was filmed in {t}?", "A film filmed in {t} is [BLANK]",
            "the original language of {x}", "a film in {x}"),
      entry("work_genre",
            {"What is the genre of the work {h}?", "Which genre does the work {h} belong to?",
             "What kind of work is {h}?", "In which genre is the work {h}?"},
            {"The genre of the work {h} is [BLANK]", "The work {h} belongs to the genre [BLANK]",
             "{h} is a work of the genre [BLANK]", "The work {h} is classified as [BLANK]"},
            "Which work belongs to the genre {t}?", "A work of the genre {t} is [BLANK]",
            "the genre of the work {x}", "a work of the genre {x}"),
      entry("continent",
            {"On which continent is {h}?", "Which continent is {h} part of?",
             "What continent contains {h}?", "{h} lies on which continent?"},
            {"{h} is located on the continent [BLANK]", "The continent of {h} is [BLANK]",
             "{h} is part of the continent [BLANK]", "The continent containing {h} is [BLANK]"},
            "Which country lies on {t}?", "A country on the continent {t} is [BLANK]",
            "the continent of {x}", "a country on {x}"),
      entry("time_zone",
            {"What time zone does {h} use?", "Which time zone is {h} in?",
             "What is the time zone of {h}?", "In which time zone does {h} lie?"},
            {"{h} uses the time zone [BLANK]", "The time zone of {h} is [BLANK]",
             "{h} keeps the time of [BLANK]", "The clocks of {h} follow [BLANK]"},
            "Which country uses the time zone {t}?", "A country using the time zone {t} is [BLANK]",
            "the time zone of {x}", "a country using {x}"),
      entry("bordering_sea",
            {"Which sea borders {h}?", "What body of water lies next to {h}?",
             "Which sea is on the coast of {h}?", "What sea does {h} border?"},
            {"{h} borders the sea [BLANK]", "The sea bordering {h} is [BLANK]",
             "The coast of {h} faces [BLANK]", "The body of water next to {h} is [BLANK]"},
            "Which country borders the sea {t}?", "A country bordering {t} is [BLANK]",
            "the sea bordering {x}", "a country bordering {x}"),
      entry("located_near_water",
            {"Which body of water is {h} near?", "What water lies next to the city {h}?",
             "Near which body of water is the city {h}?", "What water does the city {h} face?"},
            {"The city {h} lies near [BLANK]", "The water next to the city {h} is [BLANK]",
             "{h} is a city near [BLANK]", "The city {h} faces [BLANK]"},
            "Which city lies near {t}?", "A city near {t} is [BLANK]",
            "the water near {x}", "a city near {x}"),
      entry("is_a",
            {"What kind of thing is {h}?", "What category does {h} belong to?",
             "{h} is a type of what?", "Which class does {h} fall under?"},
            {"{h} is a kind of [BLANK]", "{h} belongs to the category [BLANK]",
             "{h} is a type of [BLANK]", "{h} falls under the class [BLANK]"},
            "What is a kind of {t}?", "A kind of {t} is [BLANK]",
            "the category of {x}", "a kind of {x}"),
      entry("used_for",
            {"What is {h} used for?", "What purpose does {h} serve?",
             "For what is {h} used?", "What can {h} be used for?"},
            {"{h} is used for [BLANK]", "The purpose of {h} is [BLANK]",
             "People use {h} for [BLANK]", "{h} serves the purpose of [BLANK]"},
            "What is used for {t}?", "Something used for {t} is [BLANK]",
            "the purpose of {x}", "something used for {x}"),
  };
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string replace_all(std::string s, std::string_view key, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = s.find(key, pos)) != std::string::npos) {
    s.replace(pos, key.size(), value);
    pos += value.size();
  }
  return s;
}

std::string chain_phrase(const TemplateBank& bank, const ChainPattern& pattern,
                         std::string_view head_label) {
  std::string phrase(head_label);
  for (const auto& step : pattern.steps) {
    const auto& t = bank.at(step.relation);
    phrase = replace_all(step.inverse ? t.inverse_phrase : t.phrase, "{x}", phrase);
  }
  return phrase;
}

}  // namespace

TemplateBank::TemplateBank(std::vector<RelationTemplates> entries) : entries_(std::move(entries)) {}

const RelationTemplates& TemplateBank::at(std::string_view relation) const {
  for (const auto& e : entries_) {
    if (e.relation == relation) return e;
  }
  throw TemplateError("template bank has no entry for relation '" + std::string(relation) + "'");
}

bool TemplateBank::contains(std::string_view relation) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const RelationTemplates& e) { return e.relation == relation; });
}

const TemplateBank& TemplateBank::builtin() {
  static const TemplateBank bank(builtin_entries());
  return bank;
}

std::string fill(std::string_view pattern, std::string_view head, std::string_view tail) {
  return replace_all(replace_all(std::string(pattern), "{h}", head), "{t}", tail);
}

std::string chain_question(const TemplateBank& bank, const ChainPattern& pattern,
                           std::string_view head_label) {
  return "What is " + chain_phrase(bank, pattern, head_label) + "?";
}

std::string chain_cloze(const TemplateBank& bank, const ChainPattern& pattern,
                        std::string_view head_label) {
  return capitalize(chain_phrase(bank, pattern, head_label)) + " is " + std::string(kBlank);
}

std::string chain_reasoning(const KnowledgeGraph& g, const ChainInstance& chain) {
  std::string out;
  for (std::size_t i = 1; i < chain.nodes.size(); ++i) {
    if (i > 1) out += " " + std::string(kChainJoiner) + " ";
    out += g.entity(chain.nodes[i]).label;
  }
  return out;
}

std::vector<std::string> reserved_words() {
  std::set<std::string> words;
  auto add_text = [&](std::string_view text) {
    std::string cleaned;
    for (char c : text) {
      cleaned += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(
                                                                   static_cast<unsigned char>(c)))
                                                             : ' ';
    }
    std::istringstream in(cleaned);
    std::string w;
    while (in >> w) words.insert(w);
  };
  for (const auto& e : TemplateBank::builtin().entries()) {
    for (const auto& s : e.qa) add_text(s);
    for (const auto& s : e.fb) add_text(s);
    add_text(e.inverse_qa);
    add_text(e.inverse_fb);
    add_text(e.phrase);
    add_text(e.inverse_phrase);
  }
  add_text("What is");
  add_text(kChainJoiner);
  add_text(kDefaultRefusal);
  add_text(kIcuInstruction);
  add_text("blank sep bos eos pad");
  return {words.begin(), words.end()};
}

}  // namespace kgf::kg
