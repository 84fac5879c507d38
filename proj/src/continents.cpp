#include <algorithm>
#include <array>
#include <string_view>
#include <utility>

#include "pgh/country_data.hpp"

namespace pgh {

namespace {

// Sorted by name for binary search.
constexpr std::pair<std::string_view, Continent> kContinents[] = {
    {"Afghanistan", Continent::asia},
    {"Albania", Continent::europe},
    {"Algeria", Continent::africa},
    {"Andorra", Continent::europe},
    {"Angola", Continent::africa},
    {"Antigua and Barbuda", Continent::north_america},
    {"Argentina", Continent::south_america},
    {"Armenia", Continent::asia},
    {"Australia", Continent::oceania},
    {"Austria", Continent::europe},
    {"Azerbaijan", Continent::asia},
    {"Bahamas", Continent::north_america},
    {"Bahrain", Continent::asia},
    {"Bangladesh", Continent::asia},
    {"Barbados", Continent::north_america},
    {"Belarus", Continent::europe},
    {"Belgium", Continent::europe},
    {"Belize", Continent::north_america},
    {"Benin", Continent::africa},
    {"Bhutan", Continent::asia},
    {"Bolivia", Continent::south_america},
    {"Bosnia and Herzegovina", Continent::europe},
    {"Botswana", Continent::africa},
    {"Brazil", Continent::south_america},
    {"Brunei", Continent::asia},
    {"Bulgaria", Continent::europe},
    {"Burkina Faso", Continent::africa},
    {"Burundi", Continent::africa},
    {"Cabo Verde", Continent::africa},
    {"Cambodia", Continent::asia},
    {"Cameroon", Continent::africa},
    {"Canada", Continent::north_america},
    {"Cape Verde", Continent::africa},
    {"Central African Republic", Continent::africa},
    {"Chad", Continent::africa},
    {"Chile", Continent::south_america},
    {"China", Continent::asia},
    {"Colombia", Continent::south_america},
    {"Comoros", Continent::africa},
    {"Congo", Continent::africa},
    {"Congo Brazzaville", Continent::africa},
    {"Congo Kinshasa", Continent::africa},
    {"Costa Rica", Continent::north_america},
    {"Cote d'Ivoire", Continent::africa},
    {"Croatia", Continent::europe},
    {"Cuba", Continent::north_america},
    {"Cyprus", Continent::europe},
    {"Czech Republic", Continent::europe},
    {"Czechia", Continent::europe},
    {"Côte d'Ivoire", Continent::africa},
    {"DR Congo", Continent::africa},
    {"Democratic Republic of the Congo", Continent::africa},
    {"Denmark", Continent::europe},
    {"Djibouti", Continent::africa},
    {"Dominica", Continent::north_america},
    {"Dominican Republic", Continent::north_america},
    {"East Timor", Continent::asia},
    {"Ecuador", Continent::south_america},
    {"Egypt", Continent::africa},
    {"El Salvador", Continent::north_america},
    {"Equatorial Guinea", Continent::africa},
    {"Eritrea", Continent::africa},
    {"Estonia", Continent::europe},
    {"Eswatini", Continent::africa},
    {"Ethiopia", Continent::africa},
    {"Fiji", Continent::oceania},
    {"Finland", Continent::europe},
    {"France", Continent::europe},
    {"Gabon", Continent::africa},
    {"Gambia", Continent::africa},
    {"Georgia", Continent::asia},
    {"Germany", Continent::europe},
    {"Ghana", Continent::africa},
    {"Greece", Continent::europe},
    {"Grenada", Continent::north_america},
    {"Guatemala", Continent::north_america},
    {"Guinea", Continent::africa},
    {"Guinea-Bissau", Continent::africa},
    {"Guyana", Continent::south_america},
    {"Haiti", Continent::north_america},
    {"Honduras", Continent::north_america},
    {"Hong Kong", Continent::asia},
    {"Hungary", Continent::europe},
    {"Iceland", Continent::europe},
    {"India", Continent::asia},
    {"Indonesia", Continent::asia},
    {"Iran", Continent::asia},
    {"Iraq", Continent::asia},
    {"Ireland", Continent::europe},
    {"Israel", Continent::asia},
    {"Italy", Continent::europe},
    {"Ivory Coast", Continent::africa},
    {"Jamaica", Continent::north_america},
    {"Japan", Continent::asia},
    {"Jordan", Continent::asia},
    {"Kazakhstan", Continent::asia},
    {"Kenya", Continent::africa},
    {"Kiribati", Continent::oceania},
    {"Korea", Continent::asia},
    {"Kosovo", Continent::europe},
    {"Kuwait", Continent::asia},
    {"Kyrgyzstan", Continent::asia},
    {"Laos", Continent::asia},
    {"Latvia", Continent::europe},
    {"Lebanon", Continent::asia},
    {"Lesotho", Continent::africa},
    {"Liberia", Continent::africa},
    {"Libya", Continent::africa},
    {"Liechtenstein", Continent::europe},
    {"Lithuania", Continent::europe},
    {"Luxembourg", Continent::europe},
    {"Macau", Continent::asia},
    {"Macedonia", Continent::europe},
    {"Madagascar", Continent::africa},
    {"Malawi", Continent::africa},
    {"Malaysia", Continent::asia},
    {"Maldives", Continent::asia},
    {"Mali", Continent::africa},
    {"Malta", Continent::europe},
    {"Marshall Islands", Continent::oceania},
    {"Mauritania", Continent::africa},
    {"Mauritius", Continent::africa},
    {"Mexico", Continent::north_america},
    {"Micronesia", Continent::oceania},
    {"Moldova", Continent::europe},
    {"Monaco", Continent::europe},
    {"Mongolia", Continent::asia},
    {"Montenegro", Continent::europe},
    {"Morocco", Continent::africa},
    {"Mozambique", Continent::africa},
    {"Myanmar", Continent::asia},
    {"Namibia", Continent::africa},
    {"Nauru", Continent::oceania},
    {"Nepal", Continent::asia},
    {"Netherlands", Continent::europe},
    {"New Zealand", Continent::oceania},
    {"Nicaragua", Continent::north_america},
    {"Niger", Continent::africa},
    {"Nigeria", Continent::africa},
    {"North Korea", Continent::asia},
    {"North Macedonia", Continent::europe},
    {"Northern Cyprus", Continent::europe},
    {"Norway", Continent::europe},
    {"Oman", Continent::asia},
    {"Pakistan", Continent::asia},
    {"Palau", Continent::oceania},
    {"Palestine", Continent::asia},
    {"Palestinian Territories", Continent::asia},
    {"Panama", Continent::north_america},
    {"Papua New Guinea", Continent::oceania},
    {"Paraguay", Continent::south_america},
    {"Peru", Continent::south_america},
    {"Philippines", Continent::asia},
    {"Poland", Continent::europe},
    {"Portugal", Continent::europe},
    {"Puerto Rico", Continent::north_america},
    {"Qatar", Continent::asia},
    {"Republic of Korea", Continent::asia},
    {"Republic of the Congo", Continent::africa},
    {"Romania", Continent::europe},
    {"Russia", Continent::europe},
    {"Russian Federation", Continent::europe},
    {"Rwanda", Continent::africa},
    {"Saint Kitts and Nevis", Continent::north_america},
    {"Saint Lucia", Continent::north_america},
    {"Saint Vincent and the Grenadines", Continent::north_america},
    {"Samoa", Continent::oceania},
    {"San Marino", Continent::europe},
    {"Sao Tome and Principe", Continent::africa},
    {"Saudi Arabia", Continent::asia},
    {"Senegal", Continent::africa},
    {"Serbia", Continent::europe},
    {"Seychelles", Continent::africa},
    {"Sierra Leone", Continent::africa},
    {"Singapore", Continent::asia},
    {"Slovakia", Continent::europe},
    {"Slovenia", Continent::europe},
    {"Solomon Islands", Continent::oceania},
    {"Somalia", Continent::africa},
    {"Somaliland", Continent::africa},
    {"South Africa", Continent::africa},
    {"South Korea", Continent::asia},
    {"South Sudan", Continent::africa},
    {"Spain", Continent::europe},
    {"Sri Lanka", Continent::asia},
    {"Sudan", Continent::africa},
    {"Suriname", Continent::south_america},
    {"Swaziland", Continent::africa},
    {"Sweden", Continent::europe},
    {"Switzerland", Continent::europe},
    {"Syria", Continent::asia},
    {"Taiwan", Continent::asia},
    {"Tajikistan", Continent::asia},
    {"Tanzania", Continent::africa},
    {"Thailand", Continent::asia},
    {"The Gambia", Continent::africa},
    {"Timor-Leste", Continent::asia},
    {"Togo", Continent::africa},
    {"Tonga", Continent::oceania},
    {"Trinidad and Tobago", Continent::north_america},
    {"Tunisia", Continent::africa},
    {"Turkey", Continent::europe},
    {"Turkmenistan", Continent::asia},
    {"Tuvalu", Continent::oceania},
    {"Türkiye", Continent::europe},
    {"USA", Continent::north_america},
    {"Uganda", Continent::africa},
    {"Ukraine", Continent::europe},
    {"United Arab Emirates", Continent::asia},
    {"United Kingdom", Continent::europe},
    {"United States", Continent::north_america},
    {"United States of America", Continent::north_america},
    {"Uruguay", Continent::south_america},
    {"Uzbekistan", Continent::asia},
    {"Vanuatu", Continent::oceania},
    {"Vatican City", Continent::europe},
    {"Venezuela", Continent::south_america},
    {"Viet Nam", Continent::asia},
    {"Vietnam", Continent::asia},
    {"Yemen", Continent::asia},
    {"Zambia", Continent::africa},
    {"Zimbabwe", Continent::africa},
};

}  // namespace

std::optional<Continent> lookup_continent(std::string_view country_name) noexcept {
  auto it = std::lower_bound(
      std::begin(kContinents), std::end(kContinents), country_name,
      [](const auto& entry, std::string_view key) { return entry.first < key; });
  if (it == std::end(kContinents) || it->first != country_name) return std::nullopt;
  return it->second;
}

}  // namespace pgh
