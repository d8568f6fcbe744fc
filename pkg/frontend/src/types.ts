/** Payload shapes of the read-only description-set API. */

export type HighlightRange = [number, number];

export interface CardHighlights {
  description: HighlightRange[];
  context: HighlightRange[];
}

export interface CardPayload {
  text: string;
  reference: string;
  context: string;
  paper_url: string | null;
  paper_title: string;
  highlights: CardHighlights;
}

export interface CardGroupPayload {
  relation: string;
  cards: CardPayload[];
}

export interface CardsResponse {
  target: string;
  groups: CardGroupPayload[];
}

export interface ConceptsResponse {
  concepts: string[];
}
